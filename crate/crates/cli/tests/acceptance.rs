//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use ctr_cli::experiments as ex;
use ctr_core::cqdc::ContactMode;
use ctr_core::scenario::{builtin, systems, Scenario, BUILTIN};
use ctr_core::trust_region::Variant;

type Outcome = Result<String, String>;

fn scenarios() -> Vec<Scenario> {
    BUILTIN.iter().map(|n| builtin(n).expect("registry")).collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn kkt() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for s in scenarios() {
        let r = ex::kkt_suite(&s, 100, 1, s.params.kappa).map_err(err)?;
        worst = (worst.0.max(r.nonsmooth_residual), worst.1.max(r.smoothed_complementarity));
    }
    check(worst.0 <= 1e-7 && worst.1 <= 1e-6, format!("max KKT residual {:.2e} (≤ 1e-7), max complementarity rel. error {:.2e} (≤ 1e-6)", worst.0, worst.1))
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for s in scenarios() {
        for r in ex::gradient_suite(&s, &[1e2, 1e4], 10, 2).map_err(err)? {
            if r.relative_error > worst {
                worst = r.relative_error;
                at = format!("{} state {} κ={:e} {}", s.name, r.state, r.kappa, r.block);
            }
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.2e} at {at} (≤ 1e-4)"))
}

fn residual_decay() -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for s in scenarios() {
        for r in ex::residual_decay(&s, s.params.kappa, 10, 1e-3, 3).map_err(err)? {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    check(lo >= 0.125 && hi <= 0.5, format!("ratios in [{lo:.4}, {hi:.4}] (within [0.125, 0.5])"))
}

fn wrench_route() -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for name in ["planarhand", "pushert"] {
        let gap = ex::wrench_image_gap(&builtin(name).expect("registry"), 1000, 4).map_err(err)?;
        ok &= gap <= 1e-8;
        parts.push(format!("{name} {gap:.2e}"));
    }
    check(ok, format!("max route gap {} (≤ 1e-8)", parts.join(", ")))
}

fn inclusion() -> Outcome {
    let mut parts = vec![];
    let mut violations = 0;
    for s in scenarios() {
        let r = ex::inclusion_chain(&s, 10_000, 5).map_err(err)?;
        violations += r.violations;
        parts.push(format!("{} {}/{}/{}", s.name, r.in_ctr, r.in_rctr, r.in_etr));
    }
    check(violations == 0, format!("{violations} violations; accepted CTR/R-CTR/ETR: {}", parts.join(", ")))
}

fn example_push() -> Outcome {
    let s = builtin("pusher1d").expect("registry");
    let goal = DVector::from_row_slice(&[0.22, 0.0]);
    let r = ex::single_step_trajopt(&s, &goal, &s.params).map_err(err)?;
    let u1 = r.heuristic_u[0];
    // red-zone goals lie behind the box: reaching them would need a pull
    let mut dual = f64::INFINITY;
    for g in [0.15, 0.18, 0.195] {
        dual = dual.min(ex::min_planned_dual(&s, &DVector::from_row_slice(&[g, 0.0])).map_err(err)?);
    }
    check(
        u1.abs() <= 1e-4 && r.final_error <= 0.005 && dual >= -1e-9,
        format!(
            "¹ū = {u1:.1e}, ū history {:?}, final error {:.4} m (≤ 0.005), min planned dual {dual:.2e} (≥ 0)",
            r.history.iter().map(|u| format!("{:.4}", u[0])).collect::<Vec<_>>(),
            r.final_error
        ),
    )
}

fn example_graze() -> Outcome {
    let s = builtin("boxball2d").expect("registry");
    let goal = DVector::from_row_slice(&[0.2, 0.0, 0.0]);
    let r = ex::single_step_trajopt(&s, &goal, &s.params).map_err(err)?;
    let last = r.history.last().expect("nonempty");
    check(
        !r.modes.is_empty() && r.modes.iter().all(|m| *m == ContactMode::Sticking),
        format!("³ū = ({:.4}, {:.4}), modes {:?}", last[0], last[1], r.modes),
    )
}

fn goal_suite() -> Outcome {
    let s = builtin("pushert").expect("registry");
    let rows = ex::goal_suite(&s, &s.params, 50, &[Variant::RCtr, Variant::Etr], 7).map_err(err)?;
    let by_goal: BTreeMap<usize, Vec<&ex::GoalRun>> = rows.iter().fold(BTreeMap::new(), |mut m, r| {
        m.entry(r.goal).or_insert_with(Vec::new).push(r);
        m
    });
    let rctr: Vec<&ex::GoalRun> = rows.iter().filter(|r| r.variant == Variant::RCtr).collect();
    let success = rctr.iter().filter(|r| ex::within(&r.error, &ex::GOAL_TOLERANCE)).count();
    let infeasible = rctr.iter().filter(|r| r.infeasible).count();
    let subproblems: usize = rctr.iter().map(|r| r.subproblems).sum();
    let wins = by_goal
        .values()
        .filter(|v| {
            let e = |var| v.iter().find(|r| r.variant == var).expect("both variants").error.combined();
            e(Variant::RCtr) <= e(Variant::Etr) + ex::WIN_TIE
        })
        .count();
    let n = rctr.len() as f64;
    let rate = infeasible as f64 / subproblems.max(1) as f64;
    check(
        success as f64 >= 0.8 * n && rate <= 0.01 && wins as f64 >= 0.6 * n,
        format!("success {success}/50 (≥ 80%), infeasible {infeasible}/{subproblems} subproblems (≤ 1%), R-CTR wins {wins}/50 (≥ 60%)"),
    )
}

fn grasp_order() -> Outcome {
    let s = builtin("planarhand").expect("registry");
    let a = ex::score_grasp(&s, &DVector::from_vec(systems::planarhand_antipodal()), 0).map_err(err)?;
    let b = ex::score_grasp(&s, &DVector::from_vec(systems::planarhand_single_sided()), 0).map_err(err)?;
    let ratio = a.value.max(b.value) / a.value.min(b.value);
    check(
        a.radius > b.radius && ratio <= 2.0,
        format!("radius antipodal {:.3e} > single-sided {:.3e}; V {:.3e} vs {:.3e}, ratio {ratio:.2} (≤ 2)", a.radius, b.radius, a.value, b.value),
    )
}

fn softsim() -> Outcome {
    let s = builtin("pushert").expect("registry");
    let rows = ex::softsim_trend(&s, 20, 7).map_err(err)?;
    let n = rows.len() as f64;
    let closed = rows.iter().map(|r| r.closed_error).sum::<f64>() / n;
    let open = rows.iter().map(|r| r.open_error).sum::<f64>() / n;
    let (proj, plain): (usize, usize) = (rows.iter().map(|r| r.proj_lost).sum(), rows.iter().map(|r| r.plain_lost).sum());
    check(
        closed < open && proj < plain,
        format!("mean error closed {closed:.4} < open {open:.4}; lost contact MPC_Proj {proj} < plain {plain}"),
    )
}

fn roadmap() -> Outcome {
    let r = ex::roadmap_suite(&builtin("palmsquare").expect("registry"), 150, 1).map_err(err)?;
    check(
        r.strongly_connected && r.walk_successes == 150 && r.query_ok,
        format!(
            "{} vertices, {} edges, strongly connected {}; walk {}/150; half-turn query over {} edges, error {:.4} m {:.4} rad",
            r.vertices, r.edges, r.strongly_connected, r.walk_successes, r.query_edges, r.query_error.translation, r.query_error.rotation
        ),
    )
}

const DETERMINISM_RUNS: [&str; 10] = [
    "simulate pusher1d --u-const=-0.5 --steps=10 --seed=0",
    "simulate pushert --plant=soft --steps=5 --u-const=0.01",
    "grad-check squeeze1d --n=2 --seed=3",
    "trust-region squeeze1d --variant=ra-ctr --r=0.05 --n=2000 --seed=1 --svg --deterministic",
    "motion-set planarhand --n=500 --seed=2 --svg --deterministic",
    "plan pusher1d --goal=0.22 --seed=0 --out-svg=plan.svg --deterministic",
    "mpc pushert --suite-goal=1 --seed=7 --proj",
    "bench pushert --goals=3 --variants=etr,ctr,r-ctr --seed=7",
    "grasp planarhand --n=4 --seed=1",
    "roadmap palmsquare --walk=3 --query-rotation=1.5707963267948966 --seed=0",
];

fn run_all(base: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    std::env::set_var(ctr_cli::artifacts::OUT_DIR_ENV, base);
    for cmd in DETERMINISM_RUNS {
        let argv: Vec<&str> = std::iter::once("ctr").chain(cmd.split_whitespace()).collect();
        let code = ctr_cli::run_command(argv);
        if code != 0 {
            return Err(format!("'{cmd}' exited with {code}"));
        }
    }
    let mut files = BTreeMap::new();
    for dir in std::fs::read_dir(base).map_err(err)? {
        let dir = dir.map_err(err)?.path();
        for f in std::fs::read_dir(&dir).map_err(err)? {
            let f = f.map_err(err)?.path();
            let key = format!("{}/{}", dir.file_name().unwrap().to_string_lossy(), f.file_name().unwrap().to_string_lossy());
            files.insert(key, std::fs::read(&f).map_err(err)?);
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let (fa, fb) = (run_all(a.path())?, run_all(b.path())?);
    std::env::remove_var(ctr_cli::artifacts::OUT_DIR_ENV);
    let csvs = fa.keys().filter(|k| k.ends_with(".csv")).count();
    let differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != fa.get(*k)).collect();
    check(
        fa.len() == fb.len() && differing.is_empty() && csvs > 0,
        format!("{} commands, {csvs} CSVs, {} files total; differing: {differing:?}", DETERMINISM_RUNS.len(), fa.len()),
    )
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 12] = [
        (1, "KKT and complementarity", 30, kkt),
        (2, "gradients vs finite differences", 60, gradients),
        (3, "quadratic residual decay", 60, residual_decay),
        (4, "wrench route equals image route", 60, wrench_route),
        (5, "CTR ⊆ R-CTR ⊆ ETR", 60, inclusion),
        (6, "1D pushing replay", 5, example_push),
        (7, "2D ball-box replay", 5, example_graze),
        (8, "pushert MPC goal suite", 600, goal_suite),
        (9, "grasp metric ordering", 120, grasp_order),
        (10, "second-order plant trend", 900, softsim),
        (11, "roadmap suite", 600, roadmap),
        (12, "determinism", 600, determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        let over = dt > Duration::from_secs(budget);
        let (ok, detail) = match outcome {
            Ok(d) => (!over, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        let time = format!("{:.1}s of {budget}s{}", dt.as_secs_f64(), if over { ", over budget" } else { "" });
        println!("criterion {id}: {} {name}: {detail} [{time}]", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
