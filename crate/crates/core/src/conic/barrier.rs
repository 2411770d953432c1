//! Damped Newton on the log-barrier relaxation of a [`ConicProgram`].

use nalgebra::{DMatrix, DVector};

use super::program::{Cone, ConicProgram};
use super::socp::{soc_step, solve_socp, SolveStatus};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BarrierSolveResult {
    pub x: DVector<f64>,
    /// Hessian of the barrier objective at x.
    pub hessian: DMatrix<f64>,
    pub slacks: Vec<DVector<f64>>,
    pub lambdas: Vec<DVector<f64>>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Gradient of the generalized logarithm ψ(ν) at ν.
pub fn barrier_grad(nu: &DVector<f64>, mu: f64) -> DVector<f64> {
    if nu.len() == 1 {
        return DVector::from_element(1, 1.0 / nu[0]);
    }
    let s = nu[0] * nu[0] / (mu * mu) - nu.rows(1, nu.len() - 1).norm_squared();
    let mut g = -nu * (2.0 / s);
    g[0] = 2.0 * nu[0] / (mu * mu * s);
    g
}

/// Hessian of ψ at ν (negative definite on the cone interior).
pub fn barrier_hess(nu: &DVector<f64>, mu: f64) -> DMatrix<f64> {
    if nu.len() == 1 {
        return DMatrix::from_element(1, 1, -1.0 / (nu[0] * nu[0]));
    }
    let d = nu.len();
    let s = nu[0] * nu[0] / (mu * mu) - nu.rows(1, d - 1).norm_squared();
    let g = barrier_grad(nu, mu);
    let mut h = -&g * g.transpose();
    h[(0, 0)] += 2.0 / (s * mu * mu);
    for i in 1..d {
        h[(i, i)] -= 2.0 / s;
    }
    h
}

/// Closed-form central-path dual λ = κ⁻¹∇ψ(ν).
pub fn recover_dual(nu: &DVector<f64>, mu: f64, kappa: f64) -> DVector<f64> {
    barrier_grad(nu, mu) / kappa
}

/// True when ν lies strictly inside the cone with the given margin.
pub fn strictly_inside(cone: &Cone, nu: &DVector<f64>, margin: f64) -> bool {
    nu[0] > 0.0 && cone.margin(nu) >= margin
}

fn psi(nu: &DVector<f64>, mu: f64) -> f64 {
    if nu.len() == 1 {
        nu[0].ln()
    } else {
        (nu[0] * nu[0] / (mu * mu) - nu.rows(1, nu.len() - 1).norm_squared()).ln()
    }
}

fn max_feasible_step(cone: &Cone, nu: &DVector<f64>, dnu: &DVector<f64>) -> f64 {
    if nu.len() == 1 {
        return if dnu[0] < 0.0 { -nu[0] / dnu[0] } else { f64::INFINITY };
    }
    let d = nu.len();
    // scale to the standard cone: (ν₀, μν₁)
    let x1 = nu.rows(1, d - 1) * cone.mu;
    let d1 = dnu.rows(1, d - 1) * cone.mu;
    soc_step(nu[0], &x1, dnu[0], &d1)
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    slacks: Vec<DVector<f64>>,
    lambdas: Vec<DVector<f64>>,
}

fn objective(prog: &ConicProgram, kappa: f64, x: &DVector<f64>) -> Option<f64> {
    let mut f = prog.objective(x);
    for c in &prog.cones {
        let nu = c.slack(x);
        if !(nu[0] > 0.0) || c.margin(&nu) <= 0.0 {
            return None;
        }
        f -= psi(&nu, c.mu) / kappa;
    }
    f.is_finite().then_some(f)
}

fn evaluate(prog: &ConicProgram, kappa: f64, x: &DVector<f64>) -> Eval {
    let mut grad = &prog.p * x + &prog.q;
    let mut hess = prog.p.clone();
    let mut slacks = Vec::with_capacity(prog.cones.len());
    let mut lambdas = Vec::with_capacity(prog.cones.len());
    let mut f = prog.objective(x);
    for c in &prog.cones {
        let nu = c.slack(x);
        let lam = recover_dual(&nu, c.mu, kappa);
        grad -= c.a.transpose() * &lam;
        let hn = -barrier_hess(&nu, c.mu) / kappa;
        hess += c.a.transpose() * hn * &c.a;
        f -= psi(&nu, c.mu) / kappa;
        slacks.push(nu);
        lambdas.push(lam);
    }
    Eval { f, grad, hess, slacks, lambdas }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = hess.clone().cholesky() {
        return Ok(-ch.solve(grad));
    }
    let scale = hess.diagonal().abs().max().max(1.0);
    let reg = hess + DMatrix::identity(hess.nrows(), hess.ncols()) * (1e-10 * scale);
    reg.cholesky()
        .map(|ch| -ch.solve(grad))
        .ok_or_else(|| Error::NumericalFailure("barrier Hessian factorization failed".into()))
}

/// Minimizes ½xᵀPx + qᵀx − κ⁻¹ Σ ψᵢ(Aᵢx + cᵢ) from a strictly feasible x₀.
///
/// Uses κ-continuation (factor 10 from min(κ, 10)) before the final solve.
pub fn solve_barrier_newton(prog: &ConicProgram, kappa: f64, x0: &DVector<f64>, tol: f64) -> Result<BarrierSolveResult> {
    if prog.eq.is_some() {
        return Err(Error::InvalidModel("barrier solver does not take equality constraints".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidModel("kappa must be positive".into()));
    }
    if objective(prog, kappa, x0).is_none() {
        return Err(Error::InfeasibleStart);
    }
    let gtol = tol * (1.0 + prog.q.norm());
    let mut x = x0.clone();
    let mut iterations = 0;
    let mut stage_kappa = kappa.min(10.0);
    loop {
        let last = stage_kappa >= kappa;
        let kap = if last { kappa } else { stage_kappa };
        let (xn, its) = newton_stage(prog, kap, x, if last { Some(gtol) } else { None })?;
        x = xn;
        iterations += its;
        if last {
            break;
        }
        stage_kappa *= 10.0;
    }
    let ev = evaluate(prog, kappa, &x);
    let grad_norm = ev.grad.norm();
    Ok(BarrierSolveResult { x, hessian: ev.hess, slacks: ev.slacks, lambdas: ev.lambdas, iterations, grad_norm })
}

fn newton_stage(prog: &ConicProgram, kappa: f64, mut x: DVector<f64>, gtol: Option<f64>) -> Result<(DVector<f64>, usize)> {
    let max_iter = 200;
    let mut polish = 0;
    for it in 0..max_iter {
        let ev = evaluate(prog, kappa, &x);
        let gnorm = ev.grad.norm();
        let dx = newton_direction(&ev.hess, &ev.grad)?;
        let decrement = -ev.grad.dot(&dx) * kappa;
        match gtol {
            Some(t) if gnorm <= t => {
                // one extra polishing step once inside the tolerance
                if polish >= 1 || gnorm == 0.0 {
                    return Ok((x, it));
                }
                polish += 1;
            }
            None if decrement < 1e-3 => return Ok((x, it)),
            _ => {}
        }
        let mut amax = f64::INFINITY;
        for (c, nu) in prog.cones.iter().zip(&ev.slacks) {
            amax = amax.min(max_feasible_step(c, nu, &(&c.a * &dx)));
        }
        let mut alpha = (0.99 * amax).min(1.0);
        let slope = ev.grad.dot(&dx);
        let mut accepted = false;
        for _ in 0..60 {
            let xt = &x + alpha * &dx;
            if let Some(ft) = objective(prog, kappa, &xt) {
                if ft <= ev.f + 0.25 * alpha * slope + 1e-15 * ev.f.abs().max(1.0) {
                    x = xt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Round-off floor: keep the point if it is already within tolerance.
            if gtol.map_or(true, |t| gnorm <= 1e3 * t) {
                return Ok((x, it));
            }
            return Err(Error::NumericalFailure(format!("line search failed (|g| = {gnorm:.3e})")));
        }
    }
    let ev = evaluate(prog, kappa, &x);
    match gtol {
        Some(t) if ev.grad.norm() > 1e3 * t => Err(Error::NumericalFailure("barrier Newton iteration cap".into())),
        _ => Ok((x, max_iter)),
    }
}

/// Finds a point with every cone margin ≥ `margin`.
///
/// Starts at `hint`, retracts violated cones along their normal rows, and
/// falls back to a phase-one SOCP when cyclic retraction does not settle.
pub fn strictly_feasible_start(prog: &ConicProgram, hint: &DVector<f64>, margin: f64) -> Result<DVector<f64>> {
    let mut x = hint.clone();
    let ok = |x: &DVector<f64>| prog.cones.iter().all(|c| strictly_inside(c, &c.slack(x), margin));
    if ok(&x) {
        return Ok(x);
    }
    for _ in 0..50 {
        for c in &prog.cones {
            let nu = c.slack(&x);
            let m = c.margin(&nu);
            if m < margin || !(nu[0] > 0.0) {
                let row = c.a.row(0).transpose();
                let rn = row.norm_squared();
                if rn > 0.0 {
                    x += &row * ((2.0 * margin - m) / rn);
                }
            }
        }
        if ok(&x) {
            return Ok(x);
        }
    }
    phase_one(prog, hint, margin)
}

fn phase_one(prog: &ConicProgram, hint: &DVector<f64>, margin: f64) -> Result<DVector<f64>> {
    let n = prog.n();
    // variables (x, t): min -t + ρ/2 ‖x − hint‖²  s.t. Aᵢx + cᵢ − t e ∈ Kᵢ, 1 − t ≥ 0
    let rho = 1e-6;
    let mut p = DMatrix::zeros(n + 1, n + 1);
    let mut q = DVector::zeros(n + 1);
    for i in 0..n {
        p[(i, i)] = rho;
        q[i] = -rho * hint[i];
    }
    q[n] = -1.0;
    let mut cones = Vec::new();
    for c in &prog.cones {
        let mut a = DMatrix::zeros(c.dim(), n + 1);
        a.view_mut((0, 0), (c.dim(), n)).copy_from(&c.a);
        a[(0, n)] = -1.0;
        cones.push(Cone::new(a, c.c.clone(), c.mu));
    }
    let mut cap = DMatrix::zeros(1, n + 1);
    cap[(0, n)] = -1.0;
    cones.push(Cone::new(cap, DVector::from_element(1, 1.0), 0.0));
    let aux = ConicProgram::new(p, q, None, cones)?;
    let sol = solve_socp(&aux, 1e-9);
    if sol.status == SolveStatus::Optimal && sol.x[n] > margin {
        let x = sol.x.rows(0, n).into_owned();
        if prog.cones.iter().all(|c| strictly_inside(c, &c.slack(&x), margin * 0.5)) {
            return Ok(x);
        }
    }
    Err(Error::InfeasibleStart)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_quadratic_single_step() {
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let prog = ConicProgram::new(p.clone(), b.clone(), None, vec![]).unwrap();
        let r = solve_barrier_newton(&prog, 100.0, &DVector::zeros(2), 1e-10).unwrap();
        let xs = -p.lu().solve(&b).unwrap();
        assert!((r.x - xs).norm() < 1e-12);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn barrier_derivatives_match_finite_differences() {
        let nu = DVector::from_vec(vec![0.7, 0.2]);
        let mu = 0.5;
        let g = barrier_grad(&nu, mu);
        let h = barrier_hess(&nu, mu);
        let eps = 1e-6;
        for k in 0..2 {
            let mut a = nu.clone();
            let mut b = nu.clone();
            a[k] += eps;
            b[k] -= eps;
            assert!(((psi(&a, mu) - psi(&b, mu)) / (2.0 * eps) - g[k]).abs() < 1e-7);
            let dg = (barrier_grad(&a, mu) - barrier_grad(&b, mu)) / (2.0 * eps);
            for r in 0..2 {
                assert!((dg[r] - h[(r, k)]).abs() < 1e-5);
            }
        }
        // central-path identities
        let lam = recover_dual(&nu, mu, 1e3);
        assert!((lam.dot(&nu) - 2e-3).abs() < 1e-15);
        assert!(mu * lam[0] >= lam[1].abs());
    }
}
