//! Convex quasidynamic contact dynamics: assembly, non-smooth and smoothed steps.

use nalgebra::{DMatrix, DVector};

use crate::conic::{
    dual_cone_margin, solve_barrier_newton, solve_socp, strictly_feasible_start, Cone, ConicProgram, SolveStatus,
};
use crate::error::{Error, Result};
use crate::geometry::{contacts_for_pairs, detect_contacts, ContactKinematics, SystemModel};

/// Dynamics SOCP data at one (q, u): min ½q₊ᵀPq₊ + bᵀq₊ s.t. Jᵢq₊ + cᵢ ∈ Kᵢ.
#[derive(Clone, Debug)]
pub struct DynamicsProblem {
    pub p: DMatrix<f64>,
    pub b: DVector<f64>,
    pub contacts: Vec<ContactKinematics>,
}

impl DynamicsProblem {
    pub fn program(&self) -> ConicProgram {
        let cones = self
            .contacts
            .iter()
            .map(|c| Cone::new(c.jacobian.clone(), c.offset.clone(), c.mu))
            .collect();
        ConicProgram { p: self.p.clone(), q: self.b.clone(), eq: None, cones }
    }

    pub fn pair_indices(&self) -> Vec<usize> {
        self.contacts.iter().map(|c| c.pair).collect()
    }
}

/// P = blockdiag(εM_o/h², K_a); b = −[εM_o qᵒ/h² + τᵒ; K_a u + τᵃ].
pub fn cost_terms(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = sys.n_q();
    let mut p = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let scale = sys.epsilon / (sys.h * sys.h);
    let tau_o = sys.tau_object_total();
    let tau_a = sys.tau_robot_vec();
    for (i, &gi) in sys.object_indices.iter().enumerate() {
        let mut acc = tau_o[i];
        for (j, &gj) in sys.object_indices.iter().enumerate() {
            p[(gi, gj)] = scale * sys.object_mass[i][j];
            acc += scale * sys.object_mass[i][j] * q[gj];
        }
        b[gi] = -acc;
    }
    for (k, &gk) in sys.robot_indices.iter().enumerate() {
        p[(gk, gk)] = sys.stiffness[k];
        b[gk] = -(sys.stiffness[k] * u[k] + tau_a[k]);
    }
    (p, b)
}

pub fn assemble(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>) -> DynamicsProblem {
    let (p, b) = cost_terms(sys, q, u);
    DynamicsProblem { p, b, contacts: detect_contacts(sys, q, sys.phi_threshold()) }
}

/// Assembly with a fixed list of contact pairs (used when perturbing around a nominal).
pub fn assemble_with_pairs(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>, pairs: &[usize]) -> DynamicsProblem {
    let (p, b) = cost_terms(sys, q, u);
    DynamicsProblem { p, b, contacts: contacts_for_pairs(sys, q, pairs) }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub q_next: DVector<f64>,
    pub lambdas: Vec<DVector<f64>>,
    pub slacks: Vec<DVector<f64>>,
    /// ∞ for the non-smooth step.
    pub kappa: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub hessian: Option<DMatrix<f64>>,
    pub problem: DynamicsProblem,
}

impl StepResult {
    /// ‖Pq₊ + b − Σ Jᵢᵀλᵢ‖.
    pub fn force_balance_residual(&self) -> f64 {
        let mut r = &self.problem.p * &self.q_next + &self.problem.b;
        for (c, l) in self.problem.contacts.iter().zip(&self.lambdas) {
            r -= c.jacobian.transpose() * l;
        }
        r.norm()
    }

    pub fn contacts(&self) -> &[ContactKinematics] {
        &self.problem.contacts
    }
}

pub const SOCP_TOL: f64 = 1e-9;
pub const NEWTON_TOL: f64 = 1e-10;

fn finish_nonsmooth(problem: DynamicsProblem) -> Result<StepResult> {
    let sol = solve_socp(&problem.program(), SOCP_TOL);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::SolverStatus(format!("{:?}", sol.status)));
    }
    Ok(StepResult {
        q_next: sol.x,
        lambdas: sol.lambdas,
        slacks: sol.slacks,
        kappa: f64::INFINITY,
        status: sol.status,
        iterations: sol.iterations,
        hessian: None,
        problem,
    })
}

/// f(q, u): the Anitescu SOCP solved by the interior-point method.
pub fn step_nonsmooth(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>) -> Result<StepResult> {
    finish_nonsmooth(assemble(sys, q, u))
}

pub fn step_nonsmooth_with_pairs(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>, pairs: &[usize]) -> Result<StepResult> {
    finish_nonsmooth(assemble_with_pairs(sys, q, u, pairs))
}

/// f_κ(q, u): the log-barrier relaxation solved by damped Newton.
pub fn step_smoothed(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>, kappa: f64) -> Result<StepResult> {
    solve_smoothed(sys, q, assemble(sys, q, u), kappa, NEWTON_TOL)
}

pub fn step_smoothed_with_pairs(
    sys: &SystemModel,
    q: &DVector<f64>,
    u: &DVector<f64>,
    kappa: f64,
    pairs: &[usize],
    tol: f64,
) -> Result<StepResult> {
    solve_smoothed(sys, q, assemble_with_pairs(sys, q, u, pairs), kappa, tol)
}

fn solve_smoothed(_sys: &SystemModel, q: &DVector<f64>, problem: DynamicsProblem, kappa: f64, tol: f64) -> Result<StepResult> {
    let prog = problem.program();
    let x0 = strictly_feasible_start(&prog, q, 1e-6)?;
    let r = solve_barrier_newton(&prog, kappa, &x0, tol)?;
    Ok(StepResult {
        q_next: r.x,
        lambdas: r.lambdas,
        slacks: r.slacks,
        kappa,
        status: SolveStatus::Optimal,
        iterations: r.iterations,
        hessian: Some(r.hessian),
        problem,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactMode {
    Separation,
    Sticking,
    SlidingPlus,
    SlidingMinus,
}

/// Per-contact mode labels; cone-boundary duals count as sliding.
pub fn classify_mode(result: &StepResult, tol: f64) -> Vec<ContactMode> {
    result
        .problem
        .contacts
        .iter()
        .zip(result.lambdas.iter().zip(&result.slacks))
        .map(|(c, (lam, nu))| {
            if lam.norm() <= tol && nu[0] > tol {
                return ContactMode::Separation;
            }
            if dual_cone_margin(lam, c.mu) > tol {
                return ContactMode::Sticking;
            }
            if lam.len() > 1 && lam[1] < 0.0 {
                ContactMode::SlidingMinus
            } else {
                ContactMode::SlidingPlus
            }
        })
        .collect()
}

/// Rolls f from q₀ under `inputs`, returning q₀..q_T.
pub fn rollout_nonsmooth(sys: &SystemModel, q0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut qs = vec![q0.clone()];
    for u in inputs {
        let next = step_nonsmooth(sys, qs.last().expect("nonempty"), u)?.q_next;
        qs.push(next);
    }
    Ok(qs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::systems::{boxball2d, pusher1d, squeeze1d};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn pull_leaves_object_in_place() {
        let sys = pusher1d();
        let r = step_nonsmooth(&sys, &v(&[0.2, 0.0]), &v(&[-0.1])).unwrap();
        assert!((r.q_next[0] - 0.2).abs() < 1e-7);
        assert!((r.q_next[1] + 0.1).abs() < 1e-7);
        assert!(r.lambdas[0][0].abs() < 1e-7);
        assert_eq!(classify_mode(&r, 1e-6), vec![ContactMode::Separation]);
    }

    #[test]
    fn push_through_matches_hand_kkt() {
        // Oracle: contact active, q₊ᵒ − q₊ᵃ = 0.2; minimize ½a(x−0.2)² + ½k(y−u)² with x = y + 0.2.
        let sys = pusher1d();
        let (a, k, u) = (sys.epsilon * sys.object_mass[0][0] / (sys.h * sys.h), sys.stiffness[0], 0.05);
        let y = k * u / (a + k);
        let r = step_nonsmooth(&sys, &v(&[0.2, 0.0]), &v(&[u])).unwrap();
        assert!((r.q_next[1] - y).abs() < 1e-7);
        assert!((r.q_next[0] - (y + 0.2)).abs() < 1e-7);
        assert!((r.q_next[0] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn squeeze_has_two_cones() {
        let p = assemble(&squeeze1d(), &v(&[0.0, -0.2, 0.2]), &v(&[-0.2, 0.2]));
        assert_eq!(p.contacts.len(), 2);
    }

    #[test]
    fn smoothed_push_from_distance() {
        let sys = pusher1d();
        let r = step_smoothed(&sys, &v(&[0.2, 0.0]), &v(&[0.0]), 100.0).unwrap();
        assert!(r.q_next[0] > 0.2);
        let comp = r.slacks[0].dot(&r.lambdas[0]);
        assert!((comp - 0.01).abs() < 1e-8 * 0.01);
    }

    #[test]
    fn boxball_sticking_push() {
        let sys = boxball2d();
        let r = step_nonsmooth(&sys, &v(&[0.0, 0.0, 0.0]), &v(&[0.02, -0.03])).unwrap();
        assert!(r.q_next[0] > 0.0);
        assert_eq!(classify_mode(&r, 1e-6), vec![ContactMode::Sticking]);
    }
}
