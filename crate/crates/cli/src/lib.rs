//! The `ctr` command line: scenario loading, experiment runs and CSV/SVG
//! artifacts with a manifest per run.

pub mod artifacts;
pub mod experiments;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use thiserror::Error;

use ctr_core::cqdc::{step_nonsmooth, step_smoothed};
use ctr_core::global::{build_roadmap, query_roadmap, random_walk, rotate_configuration, sample_grasps, Roadmap, RoadmapParams};
use ctr_core::io::{svg_plot, Cell, Series, Table};
use ctr_core::planner::{ctr_trajopt, initial_guess_heuristic, mpc_rollout, mpc_second_order, pose_error, PlannerParams, SecondOrderPlant};
use ctr_core::scenario::{Scenario, BUILTIN};
use ctr_core::sensitivity::{linearize, QMode};
use ctr_core::softsim::{SoftParams, SoftPlant};
use ctr_core::trust_region::{build, motion_set_samples, TrustRegionSpec, Variant};
use ctr_core::SystemModel;

use artifacts::ArtifactDir;
use experiments as ex;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] ctr_core::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ctr", version, about = "Contact trust-region planning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Roll a scenario forward under a constant command.
    Simulate(SimulateArgs),
    /// Analytic vs finite-difference gradients of the smoothed dynamics.
    GradCheck(GradCheckArgs),
    /// Rejection samples from a trust region.
    TrustRegion(RegionArgs),
    /// Trust-region samples mapped through the linearized dynamics.
    MotionSet(RegionArgs),
    /// One CtrTrajOpt solve from q₀.
    Plan(PlanArgs),
    /// Receding-horizon MPC on the model or the soft plant.
    Mpc(MpcArgs),
    /// Goal-suite sweep over variants, radii and horizons.
    Bench(BenchArgs),
    /// Sampled grasp search.
    Grasp(GraspArgs),
    /// Build, walk and query a contact roadmap.
    Roadmap(RoadmapArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Built-in scenario name or path to a scenario JSON file.
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Artifact directory [default: $CTR_OUT_DIR/<command>-<scenario>, else ctr-out/...].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Leave timestamps out of SVG files.
    #[arg(long)]
    pub deterministic: bool,
}

/// Overrides of the scenario's planner parameters.
#[derive(Args, Debug, Clone, Default)]
pub struct PlannerFlags {
    /// etr, ctr, r-ctr, a-etr, a-ctr or ra-ctr.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Trust-region radius r.
    #[arg(long = "r")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Planning horizon T.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// CtrTrajOpt iterations n_max.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// MPC rollout steps H.
    #[arg(long)]
    pub rollout_steps: Option<usize>,
    #[arg(long)]
    pub r_weight: Option<f64>,
    /// Per-step input bound η.
    #[arg(long)]
    pub input_bound: Option<f64>,
    #[arg(long)]
    pub kappa_pull: Option<f64>,
    /// Re-plan count N (soft plant).
    #[arg(long)]
    pub replans: Option<usize>,
    #[arg(long, value_enum)]
    pub q_mode: Option<QModeArg>,
    #[arg(long)]
    pub no_joint_limits: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum QModeArg {
    Fd,
    Frozen,
    Skip,
}

impl PlannerFlags {
    pub fn apply(&self, base: &PlannerParams) -> PlannerParams {
        let mut p = base.clone();
        if let Some(v) = self.variant {
            p.variant = v;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(x) = self.$f { p.$f = x; } )* };
        }
        set!(radius, kappa, horizon, max_iterations, rollout_steps, r_weight, kappa_pull, replans);
        if self.input_bound.is_some() {
            p.input_bound = self.input_bound;
        }
        if let Some(m) = self.q_mode {
            p.q_mode = match m {
                QModeArg::Fd => QMode::FiniteDifference,
                QModeArg::Frozen => QMode::FrozenGeometry,
                QModeArg::Skip => QMode::Skip,
            };
        }
        if self.no_joint_limits {
            p.joint_limits = false;
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Plant {
    Cqdc,
    Soft,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "cqdc")]
    pub plant: Plant,
    /// Constant command: one value for every robot DOF or a comma list [default: q₀ᵃ].
    #[arg(long, allow_hyphen_values = true)]
    pub u_const: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Use the smoothed step with this κ (cqdc plant only).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Initial configuration as a comma list [default: the scenario's q₀].
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "1e2,1e4")]
    pub kappas: String,
    /// Random states checked per κ.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct RegionArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Nominal configuration as a comma list [default: scenario nominal].
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Nominal command as a comma list [default: q̄ᵃ].
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct GoalFlags {
    /// Goal as a comma list over the object coordinates or all of q.
    #[arg(long, allow_hyphen_values = true)]
    pub goal: Option<String>,
    /// Use goal i of the goal suite (also replaces q₀ by its nominal).
    #[arg(long, conflicts_with = "goal")]
    pub suite_goal: Option<usize>,
    /// CSV file name inside the artifact directory.
    #[arg(long)]
    pub out_csv: Option<String>,
    /// SVG file name inside the artifact directory; no SVG without it.
    #[arg(long)]
    pub out_svg: Option<String>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[command(flatten)]
    pub goal: GoalFlags,
}

#[derive(Args, Debug)]
pub struct MpcArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[command(flatten)]
    pub goal: GoalFlags,
    /// Re-initialize every step with the heuristic (MPC_Proj).
    #[arg(long)]
    pub proj: bool,
    #[arg(long, value_enum, default_value = "cqdc")]
    pub plant: Plant,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[arg(long, default_value_t = 50)]
    pub goals: usize,
    #[arg(long, default_value = "etr,ctr,r-ctr")]
    pub variants: String,
    /// Comma list of radii [default: the scenario radius].
    #[arg(long)]
    pub radii: Option<String>,
    /// Comma list of rollout lengths H [default: the scenario H].
    #[arg(long)]
    pub horizons: Option<String>,
}

#[derive(Args, Debug)]
pub struct GraspArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Robustness weight α [default: the scenario's].
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RoadmapArgs {
    #[command(flatten)]
    pub common: Common,
    /// Load a roadmap JSON instead of building one.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Random-walk traversals from vertex 0.
    #[arg(long, default_value_t = 0)]
    pub walk: usize,
    /// Query from vertex 0 to its image under this world rotation.
    #[arg(long, allow_hyphen_values = true)]
    pub query_rotation: Option<f64>,
}

fn suggest(input: &str, options: &[&str]) -> String {
    let best = options
        .iter()
        .map(|o| (strsim::levenshtein(input, o), *o))
        .min()
        .filter(|(d, o)| *d <= (o.len() / 2).max(2));
    match best {
        Some((_, o)) => format!("; did you mean '{o}'?"),
        None => format!("; expected one of: {}", options.join(", ")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    const NAMES: [&str; 6] = ["etr", "ctr", "r-ctr", "a-etr", "a-ctr", "ra-ctr"];
    Variant::parse(s).ok_or_else(|| format!("unknown variant '{s}'{}", suggest(s, &NAMES)))
}

fn load_scenario(name: &str) -> CliResult<Scenario> {
    match Scenario::load(name) {
        Err(ctr_core::Error::UnknownScenario(n)) => Err(CliError::Usage(format!("unknown scenario '{n}'{}", suggest(&n, &BUILTIN)))),
        r => Ok(r?),
    }
}

fn parse_list(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("--{flag}: '{t}' is not a number"))))
        .collect()
}

fn parse_vector(flag: &str, s: &str, len: usize) -> CliResult<DVector<f64>> {
    let v = parse_list(flag, s)?;
    match v.len() {
        1 => Ok(DVector::from_element(len, v[0])),
        n if n == len => Ok(DVector::from_vec(v)),
        n => Err(CliError::Usage(format!("--{flag} needs 1 or {len} values, got {n}"))),
    }
}

/// Column names for q: `qo_<i>` on object rows, `qa_<i>` on robot rows.
pub fn q_columns(sys: &SystemModel) -> Vec<String> {
    (0..sys.n_q()).map(|i| if sys.object_indices.contains(&i) { format!("qo_{i}") } else { format!("qa_{i}") }).collect()
}

fn u_columns(sys: &SystemModel) -> Vec<String> {
    (0..sys.n_qa()).map(|j| format!("u_{j}")).collect()
}

fn cells(v: &DVector<f64>) -> impl Iterator<Item = Cell> + '_ {
    v.iter().map(|&x| Cell::F(x))
}

fn timestamp(deterministic: bool) -> Option<String> {
    if deterministic {
        return None;
    }
    let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Some(format!("unix {t}"))
}

fn artifact_name(requested: &Option<String>, default: &str) -> String {
    requested.clone().unwrap_or_else(|| default.to_string())
}

fn goal_for(s: &Scenario, flags: &GoalFlags, seed: u64) -> CliResult<(DVector<f64>, DVector<f64>)> {
    let sys = &s.system;
    if let Some(i) = flags.suite_goal {
        return Ok(ex::suite_goal(s, seed, i)?);
    }
    let q0 = s.q0();
    let goal = match &flags.goal {
        Some(g) => {
            let v = parse_list("goal", g)?;
            if v.len() == sys.n_q() {
                DVector::from_vec(v)
            } else if v.len() == sys.n_qo() {
                let mut full = q0.clone();
                for (k, &i) in sys.object_indices.iter().enumerate() {
                    full[i] = v[k];
                }
                full
            } else {
                return Err(CliError::Usage(format!("--goal needs {} or {} values, got {}", sys.n_qo(), sys.n_q(), v.len())));
            }
        }
        None => s.goal().ok_or_else(|| CliError::Usage(format!("scenario '{}' has no default goal; pass --goal or --suite-goal", s.name)))?,
    };
    Ok((q0, goal))
}

/// Parses `argv` (program name first) and runs it; returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let words: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &words) {
        Ok(dir) => {
            println!("artifacts: {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `words` is the argument list recorded in the manifest.
pub fn execute(cli: &Cli, words: &[String]) -> CliResult<PathBuf> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, words),
        Command::GradCheck(a) => grad_check(a, words),
        Command::TrustRegion(a) => region(a, false, words),
        Command::MotionSet(a) => region(a, true, words),
        Command::Plan(a) => plan(a, words),
        Command::Mpc(a) => mpc(a, words),
        Command::Bench(a) => bench(a, words),
        Command::Grasp(a) => grasp(a, words),
        Command::Roadmap(a) => roadmap(a, words),
    }
}

fn open(common: &Common, command: &str) -> CliResult<(Scenario, ArtifactDir)> {
    let s = load_scenario(&common.scenario)?;
    let dir = ArtifactDir::create(common.out_dir.as_deref(), &format!("{command}-{}", s.name))?;
    Ok((s, dir))
}

fn simulate(a: &SimulateArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "simulate")?;
    let sys = &s.system;
    if a.kappa.is_some() && a.plant == Plant::Soft {
        return Err(CliError::Usage("--kappa applies to the cqdc plant only".into()));
    }
    let q0 = match &a.q {
        Some(q) => parse_vector("q", q, sys.n_q())?,
        None => s.q0(),
    };
    let u = match &a.u_const {
        Some(u) => parse_vector("u-const", u, sys.n_qa())?,
        None => sys.robot_part(&q0),
    };
    let mut cols = vec!["step".to_string(), "time".into()];
    cols.extend(q_columns(sys));
    let mut t = Table::new(cols);
    let mut qs = vec![q0.clone()];
    match a.plant {
        Plant::Cqdc => {
            for _ in 0..a.steps {
                let q = qs.last().expect("nonempty");
                let next = match a.kappa {
                    Some(k) => step_smoothed(sys, q, &u, k)?.q_next,
                    None => step_nonsmooth(sys, q, &u)?.q_next,
                };
                qs.push(next);
            }
        }
        Plant::Soft => {
            let mut plant = SoftPlant::new(sys.clone(), SoftParams::for_system(sys), q0.clone())?;
            for _ in 0..a.steps {
                plant.apply(&u)?;
                qs.push(plant.configuration());
            }
        }
    }
    for (k, q) in qs.iter().enumerate() {
        let mut row = vec![Cell::from(k), Cell::F(k as f64 * sys.h)];
        row.extend(cells(q));
        t.push(row)?;
    }
    out.write_csv("trajectory.csv", &t)?;
    if a.svg {
        let series: Vec<Series> = q_columns(sys)
            .into_iter()
            .enumerate()
            .map(|(i, label)| Series { label, points: qs.iter().enumerate().map(|(k, q)| [k as f64 * sys.h, q[i]]).collect(), line: true })
            .collect();
        let svg = svg_plot(&format!("{} ({:?} plant)", s.name, a.plant), "time [s]", "q", &series, timestamp(a.common.deterministic).as_deref());
        out.write_bytes("trajectory.svg", svg.as_bytes())?;
    }
    println!("{} steps on the {:?} plant; final q = {:?}", a.steps, a.plant, qs.last().expect("nonempty").as_slice());
    out.finish(words, a.common.seed, &s)
}

fn grad_check(a: &GradCheckArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "grad-check")?;
    let kappas = parse_list("kappas", &a.kappas)?;
    let rows = ex::gradient_suite(&s, &kappas, a.n, a.common.seed)?;
    let mut t = Table::new(["state", "kappa", "block", "relative_error"]);
    for r in &rows {
        t.push(vec![r.state.into(), r.kappa.into(), r.block.clone().into(), r.relative_error.into()])?;
    }
    out.write_csv("gradients.csv", &t)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    println!("{} blocks checked; max relative error {worst:.3e}", rows.len());
    out.finish(words, a.common.seed, &s)
}

fn region(a: &RegionArgs, image: bool, words: &[String]) -> CliResult<PathBuf> {
    let cmd = if image { "motion-set" } else { "trust-region" };
    let (s, mut out) = open(&a.common, cmd)?;
    let sys = &s.system;
    let mut p = a.planner.apply(&s.params);
    if a.planner.variant.is_none() {
        p.variant = Variant::RaCtr;
    }
    let q = match &a.q {
        Some(q) => parse_vector("q", q, sys.n_q())?,
        None => ex::motion_nominal(&s, a.common.seed),
    };
    let u = match &a.u {
        Some(u) => parse_vector("u", u, sys.n_qa())?,
        None => sys.robot_part(&q),
    };
    let mode = if p.variant.action_only() { QMode::Skip } else { p.q_mode };
    let lin = linearize(sys, &q, &u, p.kappa, mode)?;
    let mut spec = TrustRegionSpec::isotropic(p.variant, sys, p.radius, p.kappa);
    if p.joint_limits {
        spec = spec.with_joint_limits(sys);
    }
    let cs = build(&spec, sys, &lin)?;
    let set = cs.sample(a.n, a.common.seed)?;
    let mut zcols: Vec<String> = (0..cs.n_q).map(|i| format!("dq_{i}")).collect();
    zcols.extend((0..cs.n_u).map(|j| format!("du_{j}")));
    // the object rows, or the whole configuration when there is no object
    let rows: Vec<usize> = if sys.n_qo() > 0 { sys.object_indices.clone() } else { (0..sys.n_q()).collect() };
    let pred = motion_set_samples(&lin, &cs, &set.samples, Some(&rows));
    let qcols: Vec<String> = rows.iter().map(|&i| format!("q_{i}")).collect();
    let (title, points, xlabel, ylabel): (String, Vec<[f64; 2]>, String, String);
    if image {
        let mut cols = zcols.clone();
        cols.extend(qcols.iter().map(|c| format!("{c}_next")));
        let mut t = Table::new(cols);
        for (z, qp) in set.samples.iter().zip(&pred) {
            t.push(cells(z).chain(cells(qp)).collect())?;
        }
        out.write_csv("motion_set.csv", &t)?;
        // 1-D objects are plotted against the first command coordinate
        let (pts, xl, yl) = if qp_dim(&pred) >= 2 {
            (pred.iter().map(|v| [v[0], v[1]]).collect(), format!("{}_next", qcols[0]), format!("{}_next", qcols[1]))
        } else {
            (set.samples.iter().zip(&pred).map(|(z, v)| [u[0] + z[cs.n_q], v[0]]).collect(), "u_0".into(), format!("{}_next", qcols[0]))
        };
        (title, points, xlabel, ylabel) = (format!("{} motion set ({})", s.name, p.variant.name()), pts, xl, yl);
    } else {
        let mut t = Table::new(zcols.clone());
        for z in &set.samples {
            t.push(cells(z).collect())?;
        }
        out.write_csv("samples.csv", &t)?;
        let off = cs.n_q;
        let pts = if cs.n_u >= 2 {
            set.samples.iter().map(|z| [u[0] + z[off], u[1] + z[off + 1]]).collect()
        } else {
            set.samples.iter().zip(&pred).map(|(z, v)| [u[0] + z[off], v[0]]).collect()
        };
        let yl = if cs.n_u >= 2 { "u_1".to_string() } else { format!("{}_next", qcols[0]) };
        (title, points, xlabel, ylabel) = (format!("{} {} r={}", s.name, p.variant.name(), p.radius), pts, "u_0".into(), yl);
    }
    let mut summary = Table::new(["variant", "radius", "kappa", "samples", "proposals", "acceptance_rate"]);
    summary.push(vec![p.variant.name().into(), p.radius.into(), p.kappa.into(), set.samples.len().into(), set.proposals.into(), set.acceptance_rate().into()])?;
    out.write_csv("summary.csv", &summary)?;
    if a.svg {
        let svg = svg_plot(&title, &xlabel, &ylabel, &[Series { label: p.variant.name().into(), points, line: false }], timestamp(a.common.deterministic).as_deref());
        out.write_bytes(&format!("{}.svg", cmd.replace('-', "_")), svg.as_bytes())?;
    }
    println!("{} samples, acceptance rate {:.3}", set.samples.len(), set.acceptance_rate());
    out.finish(words, a.common.seed, &s)
}

fn qp_dim(pred: &[DVector<f64>]) -> usize {
    pred.first().map_or(0, |v| v.len())
}

fn object_series(sys: &SystemModel, qs: &[DVector<f64>], goal: &DVector<f64>) -> Vec<Series> {
    let mut out = vec![];
    for &i in &sys.object_indices {
        out.push(Series { label: format!("q_{i}"), points: qs.iter().enumerate().map(|(k, q)| [k as f64, q[i]]).collect(), line: true });
        out.push(Series { label: format!("goal q_{i}"), points: vec![[0.0, goal[i]], [(qs.len() - 1) as f64, goal[i]]], line: true });
    }
    out
}

fn plan(a: &PlanArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "plan")?;
    let sys = &s.system;
    let p = a.planner.apply(&s.params);
    let (q0, goal) = goal_for(&s, &a.goal, a.common.seed)?;
    let h = initial_guess_heuristic(sys, &q0, p.kappa_pull)?;
    let r = ctr_trajopt(sys, &q0, &goal, vec![h.u; p.horizon], &p)?;
    let mut cols = vec!["knot".to_string()];
    cols.extend(u_columns(sys));
    cols.extend(q_columns(sys).into_iter().map(|c| format!("{c}_next")));
    let mut t = Table::new(cols);
    for (k, u) in r.u.iter().enumerate() {
        t.push(std::iter::once(Cell::from(k)).chain(cells(u)).chain(cells(&r.q[k + 1])).collect())?;
    }
    out.write_csv(&artifact_name(&a.goal.out_csv, "plan.csv"), &t)?;
    let mut it = Table::new(["iteration", "objective"]);
    for (k, o) in r.objectives.iter().enumerate() {
        it.push(vec![k.into(), (*o).into()])?;
    }
    out.write_csv("iterations.csv", &it)?;
    if let Some(name) = &a.goal.out_svg {
        let svg = svg_plot(&format!("{} plan", s.name), "knot", "object", &object_series(sys, &r.q, &goal), timestamp(a.common.deterministic).as_deref());
        out.write_bytes(name, svg.as_bytes())?;
    }
    let e = pose_error(sys, r.q.last().expect("nonempty"), &goal);
    println!("{} iterations; terminal error {:.4} m, {:.4} rad{}", r.iterations, e.translation, e.rotation, if r.infeasible.is_some() { " (infeasible subproblem)" } else { "" });
    out.finish(words, a.common.seed, &s)
}

fn mpc(a: &MpcArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "mpc")?;
    let sys = &s.system;
    let p = a.planner.apply(&s.params);
    let (q0, goal) = goal_for(&s, &a.goal, a.common.seed)?;
    let (qs, us, note) = match a.plant {
        Plant::Cqdc => {
            let log = mpc_rollout(sys, &q0, &goal, &p, a.proj)?;
            let note = log.infeasible_at.map(|t| format!(" (infeasible at step {t})")).unwrap_or_default();
            (log.qs, log.us, note)
        }
        Plant::Soft => {
            let mut plant = SoftPlant::new(sys.clone(), SoftParams::for_system(sys), q0.clone())?;
            let log = mpc_second_order(sys, &mut plant, &goal, &p, a.proj, ex::PLANT_TOLERANCE)?;
            let note = format!(" ({} lost-contact events)", plant.lost_contact_events);
            (log.configs, log.commands, note)
        }
    };
    let mut cols = vec!["step".to_string()];
    cols.extend(q_columns(sys));
    cols.extend(u_columns(sys));
    let mut t = Table::new(cols);
    for (k, q) in qs.iter().enumerate() {
        // the last configuration has no command
        let u: Vec<Cell> = match us.get(k) {
            Some(u) => cells(u).collect(),
            None => vec![Cell::S(String::new()); sys.n_qa()],
        };
        t.push(std::iter::once(Cell::from(k)).chain(cells(q)).chain(u).collect())?;
    }
    out.write_csv(&artifact_name(&a.goal.out_csv, "mpc.csv"), &t)?;
    if let Some(name) = &a.goal.out_svg {
        let svg = svg_plot(&format!("{} MPC", s.name), "step", "object", &object_series(sys, &qs, &goal), timestamp(a.common.deterministic).as_deref());
        out.write_bytes(name, svg.as_bytes())?;
    }
    let e = pose_error(sys, qs.last().expect("nonempty"), &goal);
    println!("{} steps; terminal error {:.4} m, {:.4} rad{note}", us.len(), e.translation, e.rotation);
    out.finish(words, a.common.seed, &s)
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
}

fn bench(a: &BenchArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "bench")?;
    let base = a.planner.apply(&s.params);
    let variants: Vec<Variant> = a.variants.split(',').map(|v| parse_variant(v.trim()).map_err(CliError::Usage)).collect::<CliResult<_>>()?;
    let radii = match &a.radii {
        Some(r) => parse_list("radii", r)?,
        None => vec![base.radius],
    };
    let horizons: Vec<usize> = match &a.horizons {
        Some(h) => h.split(',').map(|t| t.trim().parse().map_err(|_| CliError::Usage(format!("--horizons: '{t}' is not a count")))).collect::<CliResult<_>>()?,
        None => vec![base.rollout_steps],
    };
    let mut runs = Table::new(["variant", "radius", "horizon", "goal", "translation_error", "rotation_error", "success", "infeasible", "subproblems"]);
    let mut agg = Table::new([
        "variant", "radius", "horizon", "goals", "successes", "mean_translation", "std_translation", "mean_rotation", "std_rotation", "infeasible", "subproblems",
    ]);
    for &r in &radii {
        for &h in &horizons {
            let mut p = base.clone();
            p.radius = r;
            p.rollout_steps = h;
            let rows = ex::goal_suite(&s, &p, a.goals, &variants, a.common.seed)?;
            for row in &rows {
                runs.push(vec![
                    row.variant.name().into(),
                    r.into(),
                    h.into(),
                    row.goal.into(),
                    row.error.translation.into(),
                    row.error.rotation.into(),
                    ex::within(&row.error, &ex::GOAL_TOLERANCE).into(),
                    row.infeasible.into(),
                    row.subproblems.into(),
                ])?;
            }
            for &v in &variants {
                let mine: Vec<&ex::GoalRun> = rows.iter().filter(|x| x.variant == v).collect();
                let (mt, st) = mean_std(&mine.iter().map(|x| x.error.translation).collect::<Vec<_>>());
                let (mr, sr) = mean_std(&mine.iter().map(|x| x.error.rotation).collect::<Vec<_>>());
                agg.push(vec![
                    v.name().into(),
                    r.into(),
                    h.into(),
                    mine.len().into(),
                    mine.iter().filter(|x| ex::within(&x.error, &ex::GOAL_TOLERANCE)).count().into(),
                    mt.into(),
                    st.into(),
                    mr.into(),
                    sr.into(),
                    mine.iter().filter(|x| x.infeasible).count().into(),
                    mine.iter().map(|x| x.subproblems).sum::<usize>().into(),
                ])?;
                println!("{:>7} r={r} H={h}: translation {mt:.4}±{st:.4} m, rotation {mr:.4}±{sr:.4} rad", v.name());
            }
        }
    }
    out.write_csv("bench.csv", &agg)?;
    out.write_csv("runs.csv", &runs)?;
    out.finish(words, a.common.seed, &s)
}

fn grasp(a: &GraspArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "grasp")?;
    let sys = &s.system;
    let p = a.planner.apply(&s.params);
    let q0 = s.q0();
    let goal = s.goal().unwrap_or_else(|| q0.clone());
    let alpha = a.alpha.unwrap_or(s.alpha);
    let (best, all) = sample_grasps(sys, &sys.object_part(&q0), &goal, a.n, alpha, a.common.seed, &p, &sys.robot_part(&q0))?;
    let mut cols: Vec<String> = ["proposal", "value", "radius", "cost", "best"].map(String::from).to_vec();
    cols.extend((0..sys.n_qa()).map(|j| format!("qa_{j}")));
    let mut t = Table::new(cols);
    for c in &all {
        let mut row = vec![c.index.into(), c.value.into(), c.radius.into(), c.cost.into(), (c.index == best.index).into()];
        row.extend(cells(&c.qa));
        t.push(row)?;
    }
    out.write_csv("grasps.csv", &t)?;
    println!("{} feasible of {} proposals; best #{}: V = {:.4e}, r = {:.4e}", all.len(), a.n, best.index, best.value, best.radius);
    out.finish(words, a.common.seed, &s)
}

fn roadmap(a: &RoadmapArgs, words: &[String]) -> CliResult<PathBuf> {
    let (s, mut out) = open(&a.common, "roadmap")?;
    let sys = &s.system;
    let mut params = RoadmapParams::for_scenario(&s);
    params.seed = a.common.seed;
    params.connect.seed = a.common.seed;
    let rm = match &a.load {
        Some(path) => Roadmap::from_json(&std::fs::read_to_string(path)?)?,
        None => {
            if s.grasps.is_empty() {
                return Err(CliError::Usage(format!("scenario '{}' declares no grasps", s.name)));
            }
            let grasps: Vec<DVector<f64>> = s.grasps.iter().map(|g| DVector::from_row_slice(g)).collect();
            build_roadmap(sys, &s.name, &grasps, &params)?
        }
    };
    if a.load.is_some() {
        params = rm.metadata.params.clone();
    }
    out.write_bytes("roadmap.json", rm.to_json()?.as_bytes())?;
    let mut vt = Table::new(std::iter::once("vertex".to_string()).chain(q_columns(sys)));
    for (i, v) in rm.vertices.iter().enumerate() {
        vt.push(std::iter::once(Cell::from(i)).chain(cells(v)).collect())?;
    }
    out.write_csv("vertices.csv", &vt)?;
    let mut et = Table::new(["edge", "source", "target", "symmetry", "mpc_steps", "inputs", "length"]);
    for (k, e) in rm.edges.iter().enumerate() {
        et.push(vec![k.into(), e.source.into(), e.target.into(), e.symmetry.into(), e.mpc_steps.into(), e.inputs.len().into(), e.length.into()])?;
    }
    out.write_csv("edges.csv", &et)?;
    if a.walk > 0 {
        let (log, _) = random_walk(sys, &rm, 0, a.walk, &params, a.common.seed)?;
        let mut wt = Table::new(["step", "edge", "source", "target", "reached"]);
        for (k, w) in log.iter().enumerate() {
            wt.push(vec![k.into(), w.edge.into(), rm.edges[w.edge].source.into(), rm.edges[w.edge].target.into(), w.reached.into()])?;
        }
        out.write_csv("walk.csv", &wt)?;
        println!("walk: {}/{} traversals reached their targets", log.iter().filter(|w| w.reached).count(), a.walk);
    }
    if let Some(angle) = a.query_rotation {
        let q0 = rm.vertices.first().ok_or_else(|| ctr_core::Error::InvalidModel("empty roadmap".into()))?.clone();
        let goal = rotate_configuration(sys, &q0, angle)?;
        let r = query_roadmap(sys, &rm, &q0, &goal, &params)?;
        let mut qt = Table::new(std::iter::once("step".to_string()).chain(q_columns(sys)));
        for (k, q) in r.states.iter().enumerate() {
            qt.push(std::iter::once(Cell::from(k)).chain(cells(q)).collect())?;
        }
        out.write_csv("query.csv", &qt)?;
        let e = pose_error(sys, r.states.last().expect("nonempty"), &goal);
        println!("query: {} stored edges, final error {:.4} m, {:.4} rad", r.edges.len(), e.translation, e.rotation);
    }
    println!("roadmap: {} vertices, {} edges, strongly connected: {}", rm.vertices.len(), rm.edges.len(), rm.strongly_connected());
    out.finish(words, a.common.seed, &s)
}
