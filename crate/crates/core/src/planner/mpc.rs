use nalgebra::DVector;

use super::{ctr_trajopt, initial_guess_heuristic, pose_error, PlannerParams, PoseError};
use crate::cqdc::step_nonsmooth;
use crate::error::Result;
use crate::geometry::SystemModel;

#[derive(Clone, Debug, Default)]
pub struct MpcLog {
    /// L_q: q₀, q₁, ...
    pub qs: Vec<DVector<f64>>,
    /// L_u: executed u*₀ per step.
    pub us: Vec<DVector<f64>>,
    /// Non-smooth contact forces of each executed step.
    pub forces: Vec<Vec<DVector<f64>>>,
    /// Terminal cost ‖q_goal − q_{t+1}‖²_Q after each step.
    pub costs: Vec<f64>,
    pub trajopt_iterations: Vec<usize>,
    /// Number of SubTrajOpt solves attempted.
    pub subproblems: usize,
    /// MPC step at which a subproblem was infeasible; the log stops there.
    pub infeasible_at: Option<usize>,
}

impl MpcLog {
    pub fn final_q(&self) -> &DVector<f64> {
        self.qs.last().expect("log starts with q0")
    }
}

fn q_cost(params: &PlannerParams, q: &DVector<f64>, goal: &DVector<f64>) -> f64 {
    (goal - q).iter().zip(&params.q_weights).map(|(d, w)| w * d * d).sum()
}

/// H steps of receding-horizon CtrTrajOpt executed on the non-smooth dynamics.
///
/// With `proj` the heuristic re-initializes the guess at every step; otherwise
/// only at t = 0, warm-starting later steps from the shifted previous solution.
pub fn mpc_rollout(sys: &SystemModel, q0: &DVector<f64>, goal: &DVector<f64>, params: &PlannerParams, proj: bool) -> Result<MpcLog> {
    params.validate(sys)?;
    let mut log = MpcLog { qs: vec![q0.clone()], ..Default::default() };
    let mut prev: Option<Vec<DVector<f64>>> = None;
    for t in 0..params.rollout_steps {
        let q = log.qs[t].clone();
        let guess = match (&prev, proj) {
            (Some(p), false) => {
                let mut g: Vec<DVector<f64>> = p[1..].to_vec();
                g.push(p.last().expect("T ≥ 1").clone());
                g
            }
            _ => {
                let u = initial_guess_heuristic(sys, &q, params.kappa_pull)?.u;
                vec![u; params.horizon]
            }
        };
        let r = ctr_trajopt(sys, &q, goal, guess, params)?;
        log.subproblems += r.iterations + usize::from(r.infeasible.is_some());
        log.trajopt_iterations.push(r.iterations);
        if r.infeasible.is_some() {
            log.infeasible_at = Some(t);
            break;
        }
        let step = step_nonsmooth(sys, &q, &r.u[0])?;
        log.costs.push(q_cost(params, &step.q_next, goal));
        log.forces.push(step.lambdas.clone());
        log.us.push(r.u[0].clone());
        log.qs.push(step.q_next);
        prev = Some(r.u);
    }
    Ok(log)
}

/// A second-order system driven by position commands held for one step h.
pub trait SecondOrderPlant {
    fn configuration(&self) -> DVector<f64>;
    fn apply(&mut self, u: &DVector<f64>) -> Result<()>;
}

#[derive(Clone, Debug, Default)]
pub struct SecondOrderLog {
    pub plans: Vec<MpcLog>,
    /// Plant configuration after every applied command, q₀ first.
    pub configs: Vec<DVector<f64>>,
    pub commands: Vec<DVector<f64>>,
    pub reached: bool,
}

impl SecondOrderLog {
    pub fn final_q(&self) -> &DVector<f64> {
        self.configs.last().expect("log starts with q0")
    }
}

/// Up to N rounds of (MPC on the quasidynamic model, then the whole chunk on the plant).
pub fn mpc_second_order(
    sys: &SystemModel,
    plant: &mut dyn SecondOrderPlant,
    goal: &DVector<f64>,
    params: &PlannerParams,
    proj: bool,
    tolerance: PoseError,
) -> Result<SecondOrderLog> {
    let mut log = SecondOrderLog { configs: vec![plant.configuration()], ..Default::default() };
    for _ in 0..params.replans {
        let q0 = plant.configuration();
        let err = pose_error(sys, &q0, goal);
        if err.translation <= tolerance.translation && err.rotation <= tolerance.rotation {
            log.reached = true;
            break;
        }
        let plan = mpc_rollout(sys, &q0, goal, params, proj)?;
        for u in &plan.us {
            plant.apply(u)?;
            log.configs.push(plant.configuration());
            log.commands.push(u.clone());
        }
        let stuck = plan.us.is_empty();
        log.plans.push(plan);
        if stuck {
            break;
        }
    }
    let err = pose_error(sys, log.final_q(), goal);
    log.reached |= err.translation <= tolerance.translation && err.rotation <= tolerance.rotation;
    Ok(log)
}
