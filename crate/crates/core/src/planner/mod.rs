//! SubTrajOpt, CtrTrajOpt, the initial-guess heuristic, MPC and goal generation.

mod goals;
mod heuristic;
mod mpc;

pub use goals::{generate_goals, GoalPair};
pub use heuristic::{initial_guess_heuristic, HeuristicResult, PHI_CONTACT};
pub use mpc::{mpc_rollout, mpc_second_order, MpcLog, SecondOrderLog, SecondOrderPlant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{solve_socp, Cone, ConicProgram, SolveStatus};
use crate::cqdc::rollout_nonsmooth;
use crate::error::{Error, Result};
use crate::geometry::{BodyKind, Dof, Role, SystemModel};
use crate::sensitivity::{linearize, LinearizedDynamics, QMode};
use crate::trust_region::{build, TrustRegionConstraints, TrustRegionSpec, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Planning horizon T.
    pub horizon: usize,
    /// CtrTrajOpt iteration limit n_max.
    pub max_iterations: usize,
    /// MPC rollout horizon H.
    pub rollout_steps: usize,
    /// Diagonal of Q over all of q (robot entries usually 0).
    pub q_weights: Vec<f64>,
    /// R = r_weight · I.
    pub r_weight: f64,
    /// Per-step input bound η; defaults to n_max · radius.
    pub input_bound: Option<f64>,
    pub variant: Variant,
    pub radius: f64,
    pub kappa: f64,
    pub kappa_pull: f64,
    /// Re-plan count N for second-order MPC.
    pub replans: usize,
    pub tol: f64,
    pub q_mode: QMode,
    pub joint_limits: bool,
}

impl PlannerParams {
    /// Unit translation weight, 0.1 on rotations, zero on the robot.
    pub fn for_system(sys: &SystemModel) -> Self {
        let rot = rotation_indices(sys);
        let q_weights = (0..sys.n_q())
            .map(|i| {
                if !sys.object_indices.contains(&i) {
                    0.0
                } else if rot.contains(&i) {
                    0.1
                } else {
                    1.0
                }
            })
            .collect();
        PlannerParams {
            horizon: 1,
            max_iterations: 2,
            rollout_steps: 10,
            q_weights,
            r_weight: 0.01,
            input_bound: None,
            variant: Variant::RCtr,
            radius: 0.05,
            kappa: 100.0,
            kappa_pull: 10.0,
            replans: 5,
            tol: 1e-6,
            q_mode: QMode::FiniteDifference,
            joint_limits: true,
        }
    }

    pub fn eta(&self) -> f64 {
        self.input_bound.unwrap_or(self.max_iterations as f64 * self.radius)
    }

    pub fn validate(&self, sys: &SystemModel) -> Result<()> {
        if self.horizon == 0 || self.max_iterations == 0 || self.rollout_steps == 0 {
            return Err(Error::InvalidModel("T, n_max and H must be at least 1".into()));
        }
        if self.q_weights.len() != sys.n_q() || self.q_weights.iter().any(|&w| w < 0.0) || self.r_weight < 0.0 {
            return Err(Error::InvalidModel("Q must be a non-negative diagonal over q; R ⪰ 0".into()));
        }
        if !(self.radius > 0.0 && self.kappa > 0.0) {
            return Err(Error::InvalidModel("radius and κ must be positive".into()));
        }
        Ok(())
    }
}

/// Configuration indices that are object or robot rotation angles of free bodies.
pub fn rotation_indices(sys: &SystemModel) -> Vec<usize> {
    sys.bodies
        .iter()
        .filter_map(|b| match &b.kind {
            BodyKind::Free { theta: Dof::Index(i), .. } if b.role != Role::Static => Some(*i),
            _ => None,
        })
        .collect()
}

pub fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * ((a + std::f64::consts::PI) / t).floor()
}

/// Copy of `goal` with rotation entries shifted by 2πk to lie nearest `reference`.
pub fn unwrap_goal(sys: &SystemModel, goal: &DVector<f64>, reference: &DVector<f64>) -> DVector<f64> {
    let mut g = goal.clone();
    for i in rotation_indices(sys) {
        g[i] = reference[i] + wrap_angle(goal[i] - reference[i]);
    }
    g
}

/// Object pose error: Euclidean over object translations, |wrapped Δθ| over rotations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub translation: f64,
    pub rotation: f64,
}

impl PoseError {
    pub fn combined(&self) -> f64 {
        self.translation + self.rotation
    }
}

pub fn pose_error(sys: &SystemModel, q: &DVector<f64>, goal: &DVector<f64>) -> PoseError {
    let rot = rotation_indices(sys);
    let (mut t2, mut r) = (0.0, 0.0f64);
    for &i in &sys.object_indices {
        if rot.contains(&i) {
            r = r.max(wrap_angle(goal[i] - q[i]).abs());
        } else {
            t2 += (goal[i] - q[i]).powi(2);
        }
    }
    PoseError { translation: t2.sqrt(), rotation: r }
}

#[derive(Clone, Debug)]
pub struct SubTrajOptResult {
    pub du: Vec<DVector<f64>>,
    /// δq₁..δq_T.
    pub dq: Vec<DVector<f64>>,
    pub objective: f64,
    pub linearizations: Vec<LinearizedDynamics>,
    pub trust_regions: Vec<TrustRegionConstraints>,
}

fn knot_spec(params: &PlannerParams, sys: &SystemModel) -> TrustRegionSpec {
    let spec = TrustRegionSpec::isotropic(params.variant, sys, params.radius, params.kappa);
    if params.joint_limits {
        spec.with_joint_limits(sys)
    } else {
        spec
    }
}

/// Solves the linearized trajectory SOCP around a non-smooth rollout.
///
/// `q_nom` holds q̄₀..q̄_T rolled out under f, `u_nom` ū₀..ū_{T−1}, `u_prev` is u₋₁.
pub fn sub_trajopt(
    sys: &SystemModel,
    q_nom: &[DVector<f64>],
    u_nom: &[DVector<f64>],
    goal: &DVector<f64>,
    u_prev: &DVector<f64>,
    params: &PlannerParams,
) -> Result<SubTrajOptResult> {
    let t_h = u_nom.len();
    if q_nom.len() != t_h + 1 || t_h == 0 {
        return Err(Error::Dimension("nominal needs T inputs and T+1 configurations".into()));
    }
    let (nq, nu) = (sys.n_q(), sys.n_qa());
    let n = t_h * (nu + nq);
    let du_col = |t: usize| t * nu;
    let dq_col = |t: usize| t_h * nu + (t - 1) * nq; // t ≥ 1

    let mut lins = Vec::with_capacity(t_h);
    let mut regions = Vec::with_capacity(t_h);
    let spec = knot_spec(params, sys);
    for t in 0..t_h {
        let mode = if t == 0 { QMode::Skip } else { params.q_mode };
        let lin = linearize(sys, &q_nom[t], &u_nom[t], params.kappa, mode)?;
        regions.push(build(&spec, sys, &lin)?);
        lins.push(lin);
    }

    let mut cones: Vec<Cone> = vec![];
    for (t, cs) in regions.iter().enumerate() {
        for cone in cs.as_cones() {
            let mut a = DMatrix::zeros(cone.dim(), n);
            if cs.n_q > 0 && t > 0 {
                a.columns_mut(dq_col(t), nq).copy_from(&cone.a.columns(0, nq));
            }
            a.columns_mut(du_col(t), nu).copy_from(&cone.a.columns(cs.n_q, nu));
            cones.push(Cone::new(a, cone.c, cone.mu));
        }
    }
    let eta = params.eta();
    for t in 1..t_h {
        for k in 0..nu {
            let base = u_nom[t][k] - u_nom[t - 1][k];
            let mut row = DMatrix::zeros(1, n);
            row[(0, du_col(t) + k)] = 1.0;
            row[(0, du_col(t - 1) + k)] = -1.0;
            cones.push(Cone::new(row.clone(), DVector::from_element(1, eta + base), 0.0));
            cones.push(Cone::new(-row, DVector::from_element(1, eta - base), 0.0));
        }
    }

    // δq_{t+1} − A_t δq_t − B_t δu_t = 0
    let mut e = DMatrix::zeros(t_h * nq, n);
    for t in 0..t_h {
        let r = t * nq;
        for i in 0..nq {
            e[(r + i, dq_col(t + 1) + i)] = 1.0;
        }
        e.view_mut((r, du_col(t)), (nq, nu)).copy_from(&(-&lins[t].b));
        if t > 0 {
            e.view_mut((r, dq_col(t)), (nq, nq)).copy_from(&(-&lins[t].a));
        }
    }

    // ½xᵀPx + cᵀx equal to half the trajectory cost up to a constant
    let goal = unwrap_goal(sys, goal, &q_nom[t_h]);
    let mut p = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    let qd = DVector::from_row_slice(&params.q_weights);
    let gap = &goal - &q_nom[t_h];
    for i in 0..nq {
        p[(dq_col(t_h) + i, dq_col(t_h) + i)] = 2.0 * qd[i];
        c[dq_col(t_h) + i] = -2.0 * qd[i] * gap[i];
    }
    let rw = params.r_weight;
    let mut constant = gap.component_mul(&gap).dot(&qd);
    for t in 0..t_h {
        let prev = if t == 0 { u_prev } else { &u_nom[t - 1] };
        let base = &u_nom[t] - prev;
        constant += rw * base.norm_squared();
        for k in 0..nu {
            let (i, j) = (du_col(t) + k, if t > 0 { Some(du_col(t - 1) + k) } else { None });
            p[(i, i)] += 2.0 * rw;
            c[i] += 2.0 * rw * base[k];
            if let Some(j) = j {
                p[(j, j)] += 2.0 * rw;
                p[(i, j)] -= 2.0 * rw;
                p[(j, i)] -= 2.0 * rw;
                c[j] -= 2.0 * rw * base[k];
            }
        }
    }

    let prog = ConicProgram::new(p, c, Some((e, DVector::zeros(t_h * nq))), cones)?;
    let sol = solve_socp(&prog, 1e-9);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let knot = regions.iter().position(|cs| !cs.contains(&DVector::zeros(cs.dim()))).unwrap_or(0);
            return Err(Error::Infeasible { knot });
        }
        s => return Err(Error::SolverStatus(format!("{s:?}"))),
    }
    let x = sol.x;
    let objective = 0.5 * x.dot(&(&prog.p * &x)) + prog.q.dot(&x) + constant;
    Ok(SubTrajOptResult {
        du: (0..t_h).map(|t| x.rows(du_col(t), nu).into_owned()).collect(),
        dq: (1..=t_h).map(|t| x.rows(dq_col(t), nq).into_owned()).collect(),
        objective,
        linearizations: lins,
        trust_regions: regions,
    })
}

#[derive(Clone, Debug)]
pub struct TrajOptResult {
    pub u: Vec<DVector<f64>>,
    /// Non-smooth rollout of `u` from q₀.
    pub q: Vec<DVector<f64>>,
    pub iterations: usize,
    pub objectives: Vec<f64>,
    /// Input history ⁰ū, ¹ū, ... (the guess first).
    pub history: Vec<Vec<DVector<f64>>>,
    /// Knot index when a subproblem was infeasible (partial result).
    pub infeasible: Option<usize>,
}

/// Alternates non-smooth rollout and SubTrajOpt up to n_max times.
pub fn ctr_trajopt(
    sys: &SystemModel,
    q0: &DVector<f64>,
    goal: &DVector<f64>,
    guess: Vec<DVector<f64>>,
    params: &PlannerParams,
) -> Result<TrajOptResult> {
    params.validate(sys)?;
    let u_prev = sys.robot_part(q0);
    let mut u = guess;
    let mut history = vec![u.clone()];
    let mut objectives: Vec<f64> = vec![];
    let mut iterations = 0;
    let mut infeasible = None;
    while iterations < params.max_iterations {
        let q_nom = rollout_nonsmooth(sys, q0, &u)?;
        let sub = match sub_trajopt(sys, &q_nom, &u, goal, &u_prev, params) {
            Ok(s) => s,
            Err(Error::Infeasible { knot }) => {
                infeasible = Some(knot);
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let step = sub.du.iter().map(|d| d.amax()).fold(0.0, f64::max);
        for (ut, dt) in u.iter_mut().zip(&sub.du) {
            *ut += dt;
        }
        history.push(u.clone());
        let stalled = objectives.last().is_some_and(|&prev| (prev - sub.objective).abs() < 1e-8);
        objectives.push(sub.objective);
        if step < params.tol || stalled {
            break;
        }
    }
    let q = rollout_nonsmooth(sys, q0, &u)?;
    Ok(TrajOptResult { u, q, iterations, objectives, history, infeasible })
}
