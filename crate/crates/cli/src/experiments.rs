//! Experiment protocols shared by the subcommands and the acceptance suite.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use ctr_core::conic::{cone_margin, dual_cone_margin};
use ctr_core::cqdc::{classify_mode, step_nonsmooth, step_smoothed, ContactMode};
use ctr_core::geometry::min_distance;
use ctr_core::global::{build_roadmap, query_roadmap, random_walk, robustness_radius, value_function, RoadmapParams, RobustnessSpec};
use ctr_core::planner::{ctr_trajopt, generate_goals, initial_guess_heuristic, mpc_rollout, mpc_second_order, pose_error, PlannerParams, PoseError};
use ctr_core::scenario::{systems, Scenario};
use ctr_core::sensitivity::{finite_difference_u, linearize, linearize_u, relative_error, taylor_residual, QMode, FD_STEP};
use ctr_core::softsim::{SoftParams, SoftPlant};
use ctr_core::trust_region::{build, motion_set_from_wrench, motion_set_samples, wrench_set_samples, TrustRegionSpec, Variant};
use ctr_core::{rng, Result};

fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Collision-free q near the scenario's q₀ and a command near its robot part.
///
/// State `i` of seed `seed` is always the same pair.
pub fn random_state(s: &Scenario, seed: u64, i: u64) -> (DVector<f64>, DVector<f64>) {
    let sys = &s.system;
    let q0 = s.q0();
    let mut r = rng::stream(seed, i);
    for _ in 0..1000 {
        let q = DVector::from_fn(q0.len(), |k, _| q0[k] + 0.01 * normal(&mut r));
        if min_distance(sys, &q) >= 0.0 {
            let qa = sys.robot_part(&q);
            let u = DVector::from_fn(qa.len(), |k, _| qa[k] + 0.03 * normal(&mut r));
            return (q, u);
        }
    }
    (q0.clone(), sys.robot_part(&q0))
}

#[derive(Clone, Debug, Default)]
pub struct KktReport {
    pub states: usize,
    /// Largest of the stationarity, cone-feasibility and complementarity residuals.
    pub nonsmooth_residual: f64,
    /// Largest |νᵀλ − θ/κ| / (θ/κ) over all contacts.
    pub smoothed_complementarity: f64,
}

/// Optimality residuals of the non-smooth and smoothed steps at `n` random states.
pub fn kkt_suite(s: &Scenario, n: usize, seed: u64, kappa: f64) -> Result<KktReport> {
    let sys = &s.system;
    let rows: Vec<(f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (q, u) = random_state(s, seed, i);
            let st = step_nonsmooth(sys, &q, &u)?;
            let mut res = st.force_balance_residual();
            for ((c, lam), nu) in st.contacts().iter().zip(&st.lambdas).zip(&st.slacks) {
                res = res.max(-cone_margin(nu, c.mu)).max(-dual_cone_margin(lam, c.mu)).max(nu.dot(lam).abs());
            }
            let sm = step_smoothed(sys, &q, &u, kappa)?;
            let mut comp: f64 = 0.0;
            for (lam, nu) in sm.lambdas.iter().zip(&sm.slacks) {
                let target = if lam.len() == 1 { 1.0 / kappa } else { 2.0 / kappa };
                comp = comp.max((nu.dot(lam) - target).abs() / target);
            }
            Ok((res, comp))
        })
        .collect::<Result<_>>()?;
    Ok(KktReport {
        states: n,
        nonsmooth_residual: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        smoothed_complementarity: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug)]
pub struct GradientRow {
    pub state: usize,
    pub kappa: f64,
    /// "B" or "D<i>".
    pub block: String,
    pub relative_error: f64,
}

/// Analytic B and Dᵢ against central differences at `n` random states.
pub fn gradient_suite(s: &Scenario, kappas: &[f64], n: usize, seed: u64) -> Result<Vec<GradientRow>> {
    let sys = &s.system;
    let jobs: Vec<(usize, f64)> = (0..n).flat_map(|i| kappas.iter().map(move |&k| (i, k))).collect();
    let rows: Vec<Vec<GradientRow>> = jobs
        .into_par_iter()
        .map(|(i, kappa)| {
            let (q, u) = random_state(s, seed, i as u64);
            let (b, d) = linearize_u(sys, &q, &u, kappa)?;
            let (bf, df) = finite_difference_u(sys, &q, &u, kappa, FD_STEP)?;
            let mut out = vec![GradientRow { state: i, kappa, block: "B".into(), relative_error: relative_error(&b, &bf) }];
            for (k, (a, f)) in d.iter().zip(&df).enumerate() {
                out.push(GradientRow { state: i, kappa, block: format!("D{k}"), relative_error: relative_error(a, f) });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// residual(δ/2)/residual(δ) of the first-order prediction for `n` random
/// directions of norm `delta` in (δq, δu).
pub fn residual_decay(s: &Scenario, kappa: f64, n: usize, delta: f64, seed: u64) -> Result<Vec<f64>> {
    let sys = &s.system;
    let (q, u) = random_state(s, seed, 0);
    let lin = linearize(sys, &q, &u, kappa, QMode::FiniteDifference)?;
    let (nq, nu) = (sys.n_q(), sys.n_qa());
    (0..n as u64)
        .map(|i| {
            let mut r = rng::stream(seed ^ 0xdeca, i);
            let z = DVector::from_fn(nq + nu, |_, _| normal(&mut r)).normalize() * delta;
            let (dq, du) = (z.rows(0, nq).into_owned(), z.rows(nq, nu).into_owned());
            let full = taylor_residual(sys, &lin, &dq, &du);
            let half = taylor_residual(sys, &lin, &(&dq * 0.5), &(&du * 0.5));
            Ok(half / full)
        })
        .collect()
}

/// Nominal used for motion-set experiments: q₀ with u = q₀ᵃ, or a contact
/// nominal for pushert.
pub fn motion_nominal(s: &Scenario, seed: u64) -> DVector<f64> {
    if s.name == "pushert" {
        DVector::from_vec(systems::pushert_contact_nominal(&mut rng::stream(seed, 0)))
    } else {
        s.q0()
    }
}

/// Largest gap between object motions predicted through the wrench set and
/// through the motion-set image, over `n` RA-CTR samples.
pub fn wrench_image_gap(s: &Scenario, n: usize, seed: u64) -> Result<f64> {
    let sys = &s.system;
    let p = &s.params;
    let q = motion_nominal(s, seed);
    let u = sys.robot_part(&q);
    let lin = linearize(sys, &q, &u, p.kappa, QMode::Skip)?;
    let cs = build(&TrustRegionSpec::isotropic(Variant::RaCtr, sys, p.radius, p.kappa), sys, &lin)?;
    let du = cs.sample(n, seed)?.samples;
    let image = motion_set_samples(&lin, &cs, &du, Some(&sys.object_indices));
    let via = motion_set_from_wrench(sys, &q, &wrench_set_samples(sys, &lin, &du).total)?;
    Ok(image.iter().zip(&via).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Default)]
pub struct InclusionReport {
    pub proposals: usize,
    pub in_ctr: usize,
    pub in_rctr: usize,
    pub in_etr: usize,
    /// Proposals accepted by a smaller set but rejected by a larger one.
    pub violations: usize,
}

/// Checks CTR ⊆ R-CTR ⊆ ETR on `n` draws from the shared ellipsoid.
pub fn inclusion_chain(s: &Scenario, n: usize, seed: u64) -> Result<InclusionReport> {
    let sys = &s.system;
    let p = &s.params;
    let q = motion_nominal(s, seed);
    let u = sys.robot_part(&q);
    let lin = linearize(sys, &q, &u, p.kappa, QMode::FiniteDifference)?;
    let mk = |v| build(&TrustRegionSpec::isotropic(v, sys, p.radius, p.kappa), sys, &lin);
    let (ctr, rctr, etr) = (mk(Variant::Ctr)?, mk(Variant::RCtr)?, mk(Variant::Etr)?);
    let mut rep = InclusionReport { proposals: n, ..Default::default() };
    let mut r = rng::stream(seed, 0);
    for _ in 0..n {
        let z = etr.propose(&mut r);
        let (a, b, c) = (ctr.contains(&z), rctr.contains(&z), etr.contains(&z));
        rep.in_ctr += a as usize;
        rep.in_rctr += b as usize;
        rep.in_etr += c as usize;
        if (a && !b) || (b && !c) {
            rep.violations += 1;
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct PushReport {
    /// ¹ū from the heuristic.
    pub heuristic_u: DVector<f64>,
    /// ¹ū, ²ū, ³ū.
    pub history: Vec<DVector<f64>>,
    pub final_q: DVector<f64>,
    pub final_error: f64,
    pub modes: Vec<ContactMode>,
}

/// Heuristic then two CtrTrajOpt iterations at T = 1 from the scenario's q₀.
pub fn single_step_trajopt(s: &Scenario, goal: &DVector<f64>, params: &PlannerParams) -> Result<PushReport> {
    let sys = &s.system;
    let q0 = s.q0();
    let mut p = params.clone();
    p.horizon = 1;
    p.max_iterations = 2;
    let h = initial_guess_heuristic(sys, &q0, p.kappa_pull)?;
    let r = ctr_trajopt(sys, &q0, goal, vec![h.u.clone()], &p)?;
    let step = step_nonsmooth(sys, &q0, &r.u[0])?;
    Ok(PushReport {
        heuristic_u: h.u,
        history: r.history.iter().map(|u| u[0].clone()).collect(),
        final_error: pose_error(sys, &step.q_next, goal).translation,
        modes: classify_mode(&step, 1e-6),
        final_q: step.q_next,
    })
}

/// Smallest linearized dual λ̄ + Dδu over the RA-CTR iterates toward `goal`;
/// negative means some iterate planned a pull.
pub fn min_planned_dual(s: &Scenario, goal: &DVector<f64>) -> Result<f64> {
    let sys = &s.system;
    let mut p = s.params.clone();
    p.variant = Variant::RaCtr;
    let rep = single_step_trajopt(s, goal, &p)?;
    let q0 = s.q0();
    let mut worst = f64::INFINITY;
    for w in rep.history.windows(2) {
        let lin = linearize(sys, &q0, &w[0], p.kappa, QMode::Skip)?;
        let du = &w[1] - &w[0];
        for i in 0..lin.contacts.len() {
            worst = worst.min(dual_cone_margin(&lin.predict_lambda(i, None, &du), lin.contacts[i].mu));
        }
    }
    Ok(worst)
}

/// Translation within 10 mm and rotation within 50 mrad.
pub const GOAL_TOLERANCE: PoseError = PoseError { translation: 0.01, rotation: 0.05 };
/// Goal-suite goals are generated at this multiple of the planning radius.
pub const GOAL_SCALE: f64 = 4.0;
/// Win counted when R-CTR's combined error is at most ETR's plus this.
pub const WIN_TIE: f64 = 1e-6;

/// Goal `i` of a goal suite: a nominal (a random contact nominal on pushert,
/// q₀ elsewhere) and a goal on the boundary of its enlarged action-only
/// motion set, generated with the scenario's own parameters.
pub fn suite_goal(s: &Scenario, seed: u64, i: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let q = if s.name == "pushert" {
        DVector::from_vec(systems::pushert_contact_nominal(&mut rng::stream(seed, i as u64)))
    } else {
        s.q0()
    };
    let g = generate_goals(&s.system, &q, 1, seed + i as u64, &s.params, GOAL_SCALE)?;
    Ok((q, g[0].goal.clone()))
}

#[derive(Clone, Debug)]
pub struct GoalRun {
    pub goal: usize,
    pub variant: Variant,
    pub error: PoseError,
    pub infeasible: bool,
    pub subproblems: usize,
}

/// MPC rollouts for every (goal, variant) under `params`; rows ordered by
/// goal then variant.
pub fn goal_suite(s: &Scenario, params: &PlannerParams, goals: usize, variants: &[Variant], seed: u64) -> Result<Vec<GoalRun>> {
    let sys = &s.system;
    let jobs: Vec<(usize, Variant)> = (0..goals).flat_map(|i| variants.iter().map(move |&v| (i, v))).collect();
    jobs.into_par_iter()
        .map(|(i, v)| {
            let (q, goal) = suite_goal(s, seed, i)?;
            let mut p = params.clone();
            p.variant = v;
            let log = mpc_rollout(sys, &q, &goal, &p, false)?;
            Ok(GoalRun {
                goal: i,
                variant: v,
                error: pose_error(sys, log.final_q(), &goal),
                infeasible: log.infeasible_at.is_some(),
                subproblems: log.subproblems,
            })
        })
        .collect()
}

pub fn within(e: &PoseError, tol: &PoseError) -> bool {
    e.translation <= tol.translation && e.rotation <= tol.rotation
}

#[derive(Clone, Debug)]
pub struct GraspScore {
    pub radius: f64,
    pub value: f64,
}

/// Robustness radius and MPC value of a planarhand configuration.
pub fn score_grasp(s: &Scenario, q: &DVector<f64>, seed: u64) -> Result<GraspScore> {
    let sys = &s.system;
    let (qa, qo) = (sys.robot_part(q), sys.object_part(q));
    let goal = s.goal().unwrap_or_else(|| q.clone());
    let radius = robustness_radius(sys, &qa, &qo, &RobustnessSpec::from_params(&s.params, seed))?;
    let value = value_function(sys, &qa, &qo, &goal, &s.params)?.v;
    Ok(GraspScore { radius, value })
}

/// Plant stop tolerance for second-order MPC; tighter than the suite
/// tolerance so the goals are not already met at the start.
pub const PLANT_TOLERANCE: PoseError = PoseError { translation: 1e-3, rotation: 5e-3 };
/// Planning radius on the soft plant.
pub const SOFT_RADIUS: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct SoftRun {
    pub goal: usize,
    pub closed_error: f64,
    pub open_error: f64,
    pub proj_lost: usize,
    pub plain_lost: usize,
}

/// Closed-loop (N re-plans), open-loop (one plan of N·H steps) and plain MPC
/// on the soft plant for the pushert suite goals.
pub fn softsim_trend(s: &Scenario, goals: usize, seed: u64) -> Result<Vec<SoftRun>> {
    let sys = &s.system;
    (0..goals)
        .into_par_iter()
        .map(|i| {
            let (q, goal) = suite_goal(s, seed, i)?;
            let run = |replans: usize, steps: usize, proj: bool| -> Result<(f64, usize)> {
                let mut p = s.params.clone();
                p.radius = SOFT_RADIUS;
                p.replans = replans;
                p.rollout_steps = steps;
                let mut plant = SoftPlant::new(sys.clone(), SoftParams::for_system(sys), q.clone())?;
                let log = mpc_second_order(sys, &mut plant, &goal, &p, proj, PLANT_TOLERANCE)?;
                Ok((pose_error(sys, log.final_q(), &goal).combined(), plant.lost_contact_events))
            };
            let n = s.params.replans;
            let h = s.params.rollout_steps;
            let closed = run(n, h, true)?;
            let open = run(1, n * h, true)?;
            let plain = run(n, h, false)?;
            Ok(SoftRun { goal: i, closed_error: closed.0, open_error: open.0, proj_lost: closed.1, plain_lost: plain.1 })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RoadmapReport {
    pub vertices: usize,
    pub edges: usize,
    pub strongly_connected: bool,
    pub walk_steps: usize,
    pub walk_successes: usize,
    pub query_edges: usize,
    pub query_error: PoseError,
    pub query_ok: bool,
}

/// Builds the scenario's roadmap, walks it and answers a half-turn query.
pub fn roadmap_suite(s: &Scenario, steps: usize, seed: u64) -> Result<RoadmapReport> {
    let sys = &s.system;
    let params = RoadmapParams::for_scenario(s);
    let grasps: Vec<DVector<f64>> = s.grasps.iter().map(|g| DVector::from_row_slice(g)).collect();
    let rm = build_roadmap(sys, &s.name, &grasps, &params)?;
    let (walk, _) = random_walk(sys, &rm, 0, steps, &params, seed)?;
    let q0 = rm.vertices[0].clone();
    let goal = ctr_core::global::rotate_configuration(sys, &q0, std::f64::consts::PI)?;
    let qr = query_roadmap(sys, &rm, &q0, &goal, &params)?;
    let replay = ctr_core::cqdc::rollout_nonsmooth(sys, &q0, &qr.inputs)?;
    let err = pose_error(sys, replay.last().expect("nonempty"), &goal);
    Ok(RoadmapReport {
        vertices: rm.vertices.len(),
        edges: rm.edges.len(),
        strongly_connected: rm.strongly_connected(),
        walk_steps: walk.len(),
        walk_successes: walk.iter().filter(|w| w.reached).count(),
        query_edges: qr.edges.len(),
        query_ok: within(&err, &params.tolerance.object),
        query_error: err,
    })
}
