//! Implicit-function gradients of the smoothed dynamics and their Taylor model.

use nalgebra::{DMatrix, DVector};

use crate::conic::barrier_hess;
use crate::cqdc::{assemble_with_pairs, step_smoothed, step_smoothed_with_pairs, StepResult};
use crate::error::{Error, Result};
use crate::geometry::{ContactKinematics, SystemModel};

/// How ∂f_κ/∂q and ∂λ_κ/∂q are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QMode {
    /// Analytic, with contact Jacobians held fixed.
    FrozenGeometry,
    /// Central differences of the smoothed step (exact up to O(h²)).
    FiniteDifference,
    /// Not computed; A and C are left at zero (action-only use).
    Skip,
}

pub const FD_STEP: f64 = 1e-5;
/// Newton tolerance used inside finite-difference solves.
pub const FD_SOLVE_TOL: f64 = 1e-13;

/// Joint primal/dual Taylor model of f_κ around (q̄, ū).
#[derive(Clone, Debug)]
pub struct LinearizedDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
    pub f_nominal: DVector<f64>,
    pub lambda_nominal: Vec<DVector<f64>>,
    pub slack_nominal: Vec<DVector<f64>>,
    pub q_bar: DVector<f64>,
    pub u_bar: DVector<f64>,
    pub kappa: f64,
    pub contacts: Vec<ContactKinematics>,
    pub q_mode: QMode,
}

impl LinearizedDynamics {
    pub fn pair_indices(&self) -> Vec<usize> {
        self.contacts.iter().map(|c| c.pair).collect()
    }

    /// q̂₊ = f̄ + Aδq + Bδu.
    pub fn predict_q(&self, dq: Option<&DVector<f64>>, du: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.f_nominal + &self.b * du;
        if let Some(dq) = dq {
            out += &self.a * dq;
        }
        out
    }

    /// λ̂ᵢ = λ̄ᵢ + Cᵢδq + Dᵢδu.
    pub fn predict_lambda(&self, i: usize, dq: Option<&DVector<f64>>, du: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.lambda_nominal[i] + &self.d[i] * du;
        if let Some(dq) = dq {
            out += &self.c[i] * dq;
        }
        out
    }
}

fn du_rhs(sys: &SystemModel) -> DMatrix<f64> {
    // −∂b/∂u = [0; K_a]
    let mut rhs = DMatrix::zeros(sys.n_q(), sys.n_qa());
    for (k, &gk) in sys.robot_indices.iter().enumerate() {
        rhs[(gk, k)] = sys.stiffness[k];
    }
    rhs
}

fn solve_hessian(h: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    h.clone()
        .cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or_else(|| Error::NumericalFailure("barrier Hessian not positive definite".into()))
}

fn dual_blocks(step: &StepResult, dq_plus: &DMatrix<f64>, extra: Option<&[DMatrix<f64>]>) -> Vec<DMatrix<f64>> {
    step.problem
        .contacts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let hpsi = barrier_hess(&step.slacks[i], c.mu) / step.kappa;
            let mut dnu = &c.jacobian * dq_plus;
            if let Some(e) = extra {
                dnu += &e[i];
            }
            hpsi * dnu
        })
        .collect()
}

fn b_and_d(sys: &SystemModel, step: &StepResult) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let h = step.hessian.as_ref().ok_or_else(|| Error::NumericalFailure("missing Hessian".into()))?;
    let b = solve_hessian(h, &du_rhs(sys))?;
    let d = dual_blocks(step, &b, None);
    Ok((b, d))
}

/// (B_κ, {D_κᵢ}) at (q̄, ū).
pub fn linearize_u(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>, kappa: f64) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let step = step_smoothed(sys, q, u, kappa)?;
    b_and_d(sys, &step)
}

fn a_and_c(
    sys: &SystemModel,
    step: &StepResult,
    q: &DVector<f64>,
    u: &DVector<f64>,
    mode: QMode,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let n = sys.n_q();
    let contacts = &step.problem.contacts;
    match mode {
        QMode::Skip => Ok((DMatrix::zeros(n, n), contacts.iter().map(|c| DMatrix::zeros(c.dim, n)).collect())),
        QMode::FrozenGeometry => {
            let h = step.hessian.as_ref().ok_or_else(|| Error::NumericalFailure("missing Hessian".into()))?;
            // −∂b/∂q on object rows is εM_o/h²
            let mut rhs = DMatrix::zeros(n, n);
            let scale = sys.epsilon / (sys.h * sys.h);
            for (i, &gi) in sys.object_indices.iter().enumerate() {
                for (j, &gj) in sys.object_indices.iter().enumerate() {
                    rhs[(gi, gj)] = scale * sys.object_mass[i][j];
                }
            }
            // ∂cᵢ/∂q with Jᵢ frozen: [J_n; 0] − Jᵢ = −[0; J_t]
            let dc: Vec<DMatrix<f64>> = contacts
                .iter()
                .map(|c| {
                    let mut m = DMatrix::zeros(c.dim, n);
                    for r in 1..c.dim {
                        for col in 0..n {
                            m[(r, col)] = -c.jacobian[(r, col)];
                        }
                    }
                    m
                })
                .collect();
            for (i, c) in contacts.iter().enumerate() {
                let hpsi = barrier_hess(&step.slacks[i], c.mu) / step.kappa;
                rhs += c.jacobian.transpose() * hpsi * &dc[i];
            }
            let a = solve_hessian(h, &rhs)?;
            let cblocks = dual_blocks(step, &a, Some(&dc));
            Ok((a, cblocks))
        }
        QMode::FiniteDifference => {
            let pairs = step.problem.pair_indices();
            let mut a = DMatrix::zeros(n, n);
            let mut cb: Vec<DMatrix<f64>> = contacts.iter().map(|c| DMatrix::zeros(c.dim, n)).collect();
            for j in 0..n {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += FD_STEP;
                qm[j] -= FD_STEP;
                let sp = step_smoothed_with_pairs(sys, &qp, u, step.kappa, &pairs, FD_SOLVE_TOL)?;
                let sm = step_smoothed_with_pairs(sys, &qm, u, step.kappa, &pairs, FD_SOLVE_TOL)?;
                a.set_column(j, &((&sp.q_next - &sm.q_next) / (2.0 * FD_STEP)));
                for i in 0..contacts.len() {
                    cb[i].set_column(j, &((&sp.lambdas[i] - &sm.lambdas[i]) / (2.0 * FD_STEP)));
                }
            }
            Ok((a, cb))
        }
    }
}

/// (A_κ, {C_κᵢ}) at (q̄, ū) in the requested mode.
pub fn linearize_q(
    sys: &SystemModel,
    q: &DVector<f64>,
    u: &DVector<f64>,
    kappa: f64,
    mode: QMode,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let step = step_smoothed(sys, q, u, kappa)?;
    a_and_c(sys, &step, q, u, mode)
}

/// Full Taylor model around (q̄, ū).
pub fn linearize(sys: &SystemModel, q: &DVector<f64>, u: &DVector<f64>, kappa: f64, mode: QMode) -> Result<LinearizedDynamics> {
    let step = step_smoothed(sys, q, u, kappa)?;
    let (b, d) = b_and_d(sys, &step)?;
    let (a, c) = a_and_c(sys, &step, q, u, mode)?;
    Ok(LinearizedDynamics {
        a,
        b,
        c,
        d,
        f_nominal: step.q_next.clone(),
        lambda_nominal: step.lambdas.clone(),
        slack_nominal: step.slacks.clone(),
        q_bar: q.clone(),
        u_bar: u.clone(),
        kappa,
        contacts: step.problem.contacts,
        q_mode: mode,
    })
}

/// Central-difference (B, {D}) oracle with the nominal pair set held fixed.
pub fn finite_difference_u(
    sys: &SystemModel,
    q: &DVector<f64>,
    u: &DVector<f64>,
    kappa: f64,
    step: f64,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let nominal = step_smoothed(sys, q, u, kappa)?;
    let pairs = nominal.problem.pair_indices();
    let mut b = DMatrix::zeros(sys.n_q(), sys.n_qa());
    let mut d: Vec<DMatrix<f64>> = nominal.problem.contacts.iter().map(|c| DMatrix::zeros(c.dim, sys.n_qa())).collect();
    for k in 0..sys.n_qa() {
        let mut up = u.clone();
        let mut um = u.clone();
        up[k] += step;
        um[k] -= step;
        let sp = step_smoothed_with_pairs(sys, q, &up, kappa, &pairs, FD_SOLVE_TOL)?;
        let sm = step_smoothed_with_pairs(sys, q, &um, kappa, &pairs, FD_SOLVE_TOL)?;
        b.set_column(k, &((&sp.q_next - &sm.q_next) / (2.0 * step)));
        for i in 0..d.len() {
            d[i].set_column(k, &((&sp.lambdas[i] - &sm.lambdas[i]) / (2.0 * step)));
        }
    }
    Ok((b, d))
}

/// Norm of the perturbed-SOCP optimality residual at the Taylor prediction.
///
/// Stationarity P̂q̂₊ + b̂ − ΣĴᵢᵀλ̂ᵢ and complementarity (Ĵᵢq̂₊ + ĉᵢ)ᵀλ̂ᵢ − θᵢ/κ,
/// with θᵢ = 2 for d ≥ 2 and 1 for d = 1, re-assembled at (q̄+δq, ū+δu).
pub fn taylor_residual(sys: &SystemModel, lin: &LinearizedDynamics, dq: &DVector<f64>, du: &DVector<f64>) -> f64 {
    let q = &lin.q_bar + dq;
    let u = &lin.u_bar + du;
    let prob = assemble_with_pairs(sys, &q, &u, &lin.pair_indices());
    let qhat = lin.predict_q(Some(dq), du);
    let mut stat = &prob.p * &qhat + &prob.b;
    let mut sq = 0.0;
    for (i, c) in prob.contacts.iter().enumerate() {
        let lam = lin.predict_lambda(i, Some(dq), du);
        stat -= c.jacobian.transpose() * &lam;
        let nu = &c.jacobian * &qhat + &c.offset;
        let theta = if c.dim == 1 { 1.0 } else { 2.0 };
        sq += (nu.dot(&lam) - theta / lin.kappa).powi(2);
    }
    (stat.norm_squared() + sq).sqrt()
}

/// max |a − f| / max |f| over a block (0 for all-zero references).
pub fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.abs().max();
    let diff = (analytic - reference).abs().max();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::systems::pusher1d;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn separated_pusher_gradients() {
        let sys = pusher1d();
        // force at a distance: coupling ~ 1/(κφ²) shrinks with κ
        let (b, _) = linearize_u(&sys, &v(&[0.2, -0.15]), &v(&[-0.15]), 1e4).unwrap();
        assert!(b[(0, 0)].abs() < 0.05);
        assert!((b[(1, 0)] - 1.0).abs() < 0.05);
        let (b, _) = linearize_u(&sys, &v(&[0.2, 0.0]), &v(&[0.0]), 100.0).unwrap();
        assert!(b[(0, 0)] > 0.0 && b[(0, 0)] < 1.0);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let sys = pusher1d();
        let (q, u) = (v(&[0.2, 0.0]), v(&[0.01]));
        for kappa in [1e2, 1e4] {
            let (b, d) = linearize_u(&sys, &q, &u, kappa).unwrap();
            let (bf, df) = finite_difference_u(&sys, &q, &u, kappa, FD_STEP).unwrap();
            assert!(relative_error(&b, &bf) < 1e-4);
            assert!(relative_error(&d[0], &df[0]) < 1e-4);
        }
    }

    #[test]
    fn residual_vanishes_at_nominal() {
        let sys = pusher1d();
        let lin = linearize(&sys, &v(&[0.2, 0.0]), &v(&[0.01]), 100.0, QMode::FiniteDifference).unwrap();
        assert!(taylor_residual(&sys, &lin, &DVector::zeros(2), &DVector::zeros(1)) < 1e-8);
        let r1 = taylor_residual(&sys, &lin, &DVector::zeros(2), &v(&[0.01]));
        let r2 = taylor_residual(&sys, &lin, &DVector::zeros(2), &v(&[0.02]));
        assert!(r1 < r2);
    }
}
