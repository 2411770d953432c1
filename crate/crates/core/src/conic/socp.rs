//! Primal-dual interior-point method for [`ConicProgram`].
//!
//! Infeasible-start path following with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step. Cones with a friction coefficient are
//! rescaled to standard Lorentz cones by S = diag(1, μ, …, μ), so that
//! s = S(Ax + c) ∈ Q and λ = S z. Steps stop at 99% of the distance to the
//! boundary; the centering parameter is σ = (gap_affine / gap)³.

use nalgebra::{DMatrix, DVector};

use super::program::ConicProgram;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

/// Per-iteration diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x: DVector<f64>,
    /// Per-cone duals with the force-balance sign (Px + q − Σ Aᵢᵀλᵢ − Eᵀy = 0).
    pub lambdas: Vec<DVector<f64>>,
    /// Per-cone slacks νᵢ = Aᵢx + cᵢ.
    pub slacks: Vec<DVector<f64>>,
    pub y: Option<DVector<f64>>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Σ νᵢᵀλᵢ at the returned point.
    pub complementarity: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug)]
pub struct SocpOptions {
    pub tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SocpOptions {
    fn default() -> Self {
        SocpOptions { tol: 1e-9, feas_tol: 1e-10, max_iter: 200 }
    }
}

/// Solves with default options except the complementarity tolerance.
pub fn solve_socp(prog: &ConicProgram, tol: f64) -> ConicSolution {
    solve_socp_with(prog, &SocpOptions { tol, ..SocpOptions::default() })
}

struct Block {
    off: usize,
    dim: usize,
}

struct Scaling {
    w: Vec<DMatrix<f64>>,
    winv: Vec<DMatrix<f64>>,
    lambda: DVector<f64>,
}

pub fn solve_socp_with(prog: &ConicProgram, opts: &SocpOptions) -> ConicSolution {
    let n = prog.n();
    let mut blocks = Vec::new();
    let mut m = 0;
    for c in &prog.cones {
        blocks.push(Block { off: m, dim: c.dim() });
        m += c.dim();
    }
    // G = -S A, h = S c
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut scale = DVector::from_element(m, 1.0);
    for (c, b) in prog.cones.iter().zip(&blocks) {
        for r in 0..b.dim {
            let sr = if r == 0 { 1.0 } else { c.mu };
            scale[b.off + r] = sr;
            for j in 0..n {
                g[(b.off + r, j)] = -sr * c.a[(r, j)];
            }
            h[b.off + r] = sr * c.c[r];
        }
    }
    let (e, f) = match &prog.eq {
        Some((e, f)) => (e.clone(), f.clone()),
        None => (DMatrix::zeros(0, n), DVector::zeros(0)),
    };
    let p_eq = e.nrows();
    let degree: usize = blocks.len();
    let q = &prog.q;
    let norm_q = q.norm();
    let norm_h = h.norm();
    let norm_f = f.norm();

    let finish = |x: DVector<f64>, y: DVector<f64>, z: &DVector<f64>, status, iterations, trace: Vec<TraceRow>| {
        let mut lambdas = Vec::new();
        let mut slacks = Vec::new();
        let mut comp = 0.0;
        for (c, b) in prog.cones.iter().zip(&blocks) {
            let zl = z.rows(b.off, b.dim);
            let lam = DVector::from_fn(b.dim, |r, _| zl[r] * scale[b.off + r]);
            let nu = c.slack(&x);
            comp += nu.dot(&lam);
            lambdas.push(lam);
            slacks.push(nu);
        }
        let rx = &prog.p * &x + q + e.transpose() * &y + g.transpose() * z;
        let ry = &e * &x - &f;
        let primal_residual = ry.norm().max(
            prog.cones
                .iter()
                .zip(&slacks)
                .map(|(c, nu)| (-c.margin(nu)).max(0.0))
                .fold(0.0, f64::max),
        );
        ConicSolution {
            x,
            lambdas,
            slacks,
            y: if p_eq > 0 { Some(-y) } else { None },
            status,
            iterations,
            complementarity: comp,
            primal_residual,
            dual_residual: rx.norm(),
            trace,
        }
    };

    // Cone-free programs reduce to one KKT solve.
    if m == 0 {
        let sol = kkt_solve(&prog.p, &e, &DMatrix::zeros(0, n), &[], &blocks, &(-q), &f, &DVector::zeros(0));
        return match sol {
            Some((x, y, _)) => finish(x, y, &DVector::zeros(0), SolveStatus::Optimal, 1, Vec::new()),
            None => finish(DVector::zeros(n), DVector::zeros(p_eq), &DVector::zeros(0), SolveStatus::NumericalFailure, 0, Vec::new()),
        };
    }

    // Initial point: KKT solve with identity scaling, then shift into the cones.
    let ident: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect();
    let init = kkt_solve(&prog.p, &e, &g, &ident, &blocks, &(-q), &f, &h);
    let (mut x, mut y, mut z) = match init {
        Some(v) => v,
        None => {
            return finish(DVector::zeros(n), DVector::zeros(p_eq), &DVector::zeros(m), SolveStatus::NumericalFailure, 0, Vec::new())
        }
    };
    let mut s = &h - &g * &x;
    shift_interior(&mut s, &blocks);
    shift_interior(&mut z, &blocks);

    let mut trace = Vec::new();
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
    for it in 0..opts.max_iter {
        let rx = &prog.p * &x + q + e.transpose() * &y + g.transpose() * &z;
        let ry = &e * &x - &f;
        let rz = &g * &x + &s - &h;
        let gap = s.dot(&z);
        let pres = (ry.norm() / (1.0 + norm_f)).max(rz.norm() / (1.0 + norm_h));
        let dres = rx.norm() / (1.0 + norm_q);
        let merit = pres.max(dres).max(gap.abs());
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone()));
        }
        if pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.tol {
            return finish(x, y, &z, SolveStatus::Optimal, it, trace);
        }
        // Farkas certificate: z ∈ Q, Gᵀz + Eᵀy ≈ 0, hᵀz + fᵀy < 0.
        let cert = -(h.dot(&z) + f.dot(&y));
        if cert > 0.0 {
            let ray = (g.transpose() * &z + e.transpose() * &y).norm();
            if ray <= 1e-8 * cert && pres > opts.feas_tol {
                return finish(x, y, &z, SolveStatus::Infeasible, it, trace);
            }
        }

        let sc = match scaling(&s, &z, &blocks) {
            Some(sc) => sc,
            None => break,
        };
        let mu = gap / degree as f64;

        let solve_dir = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            let li = jordan_div(&sc.lambda, rc, &blocks);
            let wli = block_apply(&sc.w, &li, &blocks);
            let bz = -&rz - &wli;
            let (dx, dy, dz) = kkt_solve(&prog.p, &e, &g, &sc.winv, &blocks, &(-&rx), &(-&ry), &bz)?;
            let wdz = block_apply(&sc.w, &dz, &blocks);
            let ds = block_apply(&sc.w, &(&li - &wdz), &blocks);
            Some((dx, dy, dz, ds))
        };

        let ll = jordan_prod(&sc.lambda, &sc.lambda, &blocks);
        let Some((_, _, dza, dsa)) = solve_dir(&(-&ll)) else { break };
        let alpha_aff = max_step(&s, &dsa, &blocks).min(max_step(&z, &dza, &blocks)).min(1.0);
        let gap_aff = (&s + alpha_aff * &dsa).dot(&(&z + alpha_aff * &dza));
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);
        let ds_t = block_apply(&sc.winv, &dsa, &blocks);
        let dz_t = block_apply(&sc.w, &dza, &blocks);
        let corr = jordan_prod(&ds_t, &dz_t, &blocks);
        let mut rc = -&ll - &corr;
        for b in &blocks {
            rc[b.off] += sigma * mu;
        }
        let Some((dx, dy, dz, ds)) = solve_dir(&rc) else { break };
        let alpha_max = max_step(&s, &ds, &blocks).min(max_step(&z, &dz, &blocks));
        let alpha = (0.99 * alpha_max).min(1.0);
        trace.push(TraceRow { iteration: it, primal_residual: pres, dual_residual: dres, gap, step: alpha });
        if !(alpha > 1e-14) || !alpha.is_finite() {
            break;
        }
        x += alpha * &dx;
        y += alpha * &dy;
        z += alpha * &dz;
        s += alpha * &ds;
        if !x.iter().chain(z.iter()).all(|v| v.is_finite()) {
            break;
        }
    }
    // Out of iterations or stalled: accept a near-optimal best point, else report.
    let (merit, bx, by, bz) = best.expect("at least one iterate");
    let status = if merit <= 1e2 * opts.tol.max(opts.feas_tol) {
        SolveStatus::Optimal
    } else if trace.len() >= opts.max_iter {
        SolveStatus::MaxIterations
    } else {
        SolveStatus::NumericalFailure
    };
    let iters = trace.len();
    finish(bx, by, &bz, status, iters, trace)
}

/// Solves [P Eᵀ Gᵀ; E 0 0; G 0 −W²][dx; dy; dz] = [bx; by; bz].
///
/// Works on the scaled unknown dw = W dz, where the system reads
/// [P Eᵀ Ĝᵀ; E 0 0; Ĝ 0 −I] with Ĝ = W⁻¹G; this stays well conditioned when
/// W spans many orders of magnitude near the cone boundaries.
#[allow(clippy::too_many_arguments)]
fn kkt_solve(
    p: &DMatrix<f64>,
    e: &DMatrix<f64>,
    g: &DMatrix<f64>,
    winv: &[DMatrix<f64>],
    blocks: &[Block],
    bx: &DVector<f64>,
    by: &DVector<f64>,
    bz: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = p.nrows();
    let pe = e.nrows();
    let m = g.nrows();
    let mut gh = DMatrix::zeros(m, n);
    let mut bzh = DVector::zeros(m);
    for (wi, b) in winv.iter().zip(blocks) {
        gh.rows_mut(b.off, b.dim).copy_from(&(wi * g.rows(b.off, b.dim)));
        bzh.rows_mut(b.off, b.dim).copy_from(&(wi * bz.rows(b.off, b.dim)));
    }
    let dim = n + pe + m;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(p);
    if pe > 0 {
        k.view_mut((n, 0), (pe, n)).copy_from(e);
        k.view_mut((0, n), (n, pe)).copy_from(&e.transpose());
    }
    if m > 0 {
        k.view_mut((n + pe, 0), (m, n)).copy_from(&gh);
        k.view_mut((0, n + pe), (n, m)).copy_from(&gh.transpose());
        for i in 0..m {
            k[(n + pe + i, n + pe + i)] = -1.0;
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(bx);
    rhs.rows_mut(n, pe).copy_from(by);
    rhs.rows_mut(n + pe, m).copy_from(&bzh);
    let kexact = k.clone();
    let reg = 1e-13 * p.diagonal().abs().max().max(1.0);
    for i in 0..n {
        k[(i, i)] += reg;
    }
    for i in n..n + pe {
        k[(i, i)] -= 1e-13;
    }
    let lu = k.lu();
    let mut sol = lu.solve(&rhs)?;
    // iterative refinement against the unregularized system
    for _ in 0..3 {
        let res = &rhs - &kexact * &sol;
        match lu.solve(&res) {
            Some(corr) => sol += corr,
            None => break,
        }
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let dx = sol.rows(0, n).into_owned();
    let dy = sol.rows(n, pe).into_owned();
    let dw = sol.rows(n + pe, m).into_owned();
    let dz = block_apply(winv, &dw, blocks);
    Some((dx, dy, dz))
}

fn shift_interior(v: &mut DVector<f64>, blocks: &[Block]) {
    // α = inf{α : v + αe ∈ Q}
    let mut alpha = f64::NEG_INFINITY;
    for b in blocks {
        let blk = v.rows(b.off, b.dim);
        let a = if b.dim == 1 { -blk[0] } else { blk.rows(1, b.dim - 1).norm() - blk[0] };
        alpha = alpha.max(a);
    }
    if alpha >= -1e-8 {
        for b in blocks {
            v[b.off] += 1.0 + alpha;
        }
    }
}

fn scaling(s: &DVector<f64>, z: &DVector<f64>, blocks: &[Block]) -> Option<Scaling> {
    let mut w = Vec::with_capacity(blocks.len());
    let mut winv = Vec::with_capacity(blocks.len());
    for b in blocks {
        let sb = s.rows(b.off, b.dim).into_owned();
        let zb = z.rows(b.off, b.dim).into_owned();
        let (wm, wi) = nt_scaling(&sb, &zb)?;
        w.push(wm);
        winv.push(wi);
    }
    let lambda = block_apply(&w, z, blocks);
    Some(Scaling { w, winv, lambda })
}

/// Nesterov-Todd scaling W (symmetric) with W z = W⁻¹ s.
pub(crate) fn nt_scaling(s: &DVector<f64>, z: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let d = s.len();
    if d == 1 {
        if !(s[0] > 0.0 && z[0] > 0.0) {
            return None;
        }
        let w = (s[0] / z[0]).sqrt();
        return Some((DMatrix::from_element(1, 1, w), DMatrix::from_element(1, 1, 1.0 / w)));
    }
    let det = |v: &DVector<f64>| v[0] * v[0] - v.rows(1, d - 1).norm_squared();
    let (ds, dz) = (det(s), det(z));
    if !(ds > 0.0 && dz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
        return None;
    }
    let sb = s / ds.sqrt();
    let zb = z / dz.sqrt();
    let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
    let w0 = (sb[0] + zb[0]) / (2.0 * gamma);
    let w1 = (sb.rows(1, d - 1) - zb.rows(1, d - 1)) / (2.0 * gamma);
    let beta = (ds / dz).powf(0.25);
    let mut hw = DMatrix::zeros(d, d);
    let mut hinv = DMatrix::zeros(d, d);
    hw[(0, 0)] = w0;
    hinv[(0, 0)] = w0;
    for i in 0..d - 1 {
        hw[(0, i + 1)] = w1[i];
        hw[(i + 1, 0)] = w1[i];
        hinv[(0, i + 1)] = -w1[i];
        hinv[(i + 1, 0)] = -w1[i];
        for j in 0..d - 1 {
            let v = w1[i] * w1[j] / (1.0 + w0) + if i == j { 1.0 } else { 0.0 };
            hw[(i + 1, j + 1)] = v;
            hinv[(i + 1, j + 1)] = v;
        }
    }
    Some((hw * beta, hinv / beta))
}

fn block_apply(mats: &[DMatrix<f64>], v: &DVector<f64>, blocks: &[Block]) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (mtx, b) in mats.iter().zip(blocks) {
        out.rows_mut(b.off, b.dim).copy_from(&(mtx * v.rows(b.off, b.dim)));
    }
    out
}

/// Jordan product u ∘ v, block by block.
fn jordan_prod(u: &DVector<f64>, v: &DVector<f64>, blocks: &[Block]) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for b in blocks {
        let (o, d) = (b.off, b.dim);
        if d == 1 {
            out[o] = u[o] * v[o];
            continue;
        }
        out[o] = u.rows(o, d).dot(&v.rows(o, d));
        for i in 1..d {
            out[o + i] = u[o] * v[o + i] + v[o] * u[o + i];
        }
    }
    out
}

/// Solves λ ∘ x = r for x.
fn jordan_div(lambda: &DVector<f64>, r: &DVector<f64>, blocks: &[Block]) -> DVector<f64> {
    let mut out = DVector::zeros(r.len());
    for b in blocks {
        let (o, d) = (b.off, b.dim);
        if d == 1 {
            out[o] = r[o] / lambda[o];
            continue;
        }
        let l0 = lambda[o];
        let l1 = lambda.rows(o + 1, d - 1);
        let r1 = r.rows(o + 1, d - 1);
        let det = l0 * l0 - l1.norm_squared();
        let x0 = (l0 * r[o] - l1.dot(&r1)) / det;
        out[o] = x0;
        for i in 1..d {
            out[o + i] = (r[o + i] - lambda[o + i] * x0) / l0;
        }
    }
    out
}

/// Largest α with x + αd in the cone product (may be ∞).
fn max_step(x: &DVector<f64>, d: &DVector<f64>, blocks: &[Block]) -> f64 {
    let mut alpha = f64::INFINITY;
    for b in blocks {
        let (o, m) = (b.off, b.dim);
        if m == 1 {
            if d[o] < 0.0 {
                alpha = alpha.min(-x[o] / d[o]);
            }
            continue;
        }
        let xb = x.rows(o, m);
        let db = d.rows(o, m);
        alpha = alpha.min(soc_step(xb[0], &xb.rows(1, m - 1).into_owned(), db[0], &db.rows(1, m - 1).into_owned()));
    }
    alpha
}

/// Largest α with (x₀ + αd₀) ≥ ‖x₁ + αd₁‖ for x in the interior.
pub(crate) fn soc_step(x0: f64, x1: &DVector<f64>, d0: f64, d1: &DVector<f64>) -> f64 {
    let a = d0 * d0 - d1.norm_squared();
    let b = x0 * d0 - x1.dot(d1);
    let c = x0 * x0 - x1.norm_squared();
    if c <= 0.0 {
        return 0.0;
    }
    let scale = (d0 * d0 + d1.norm_squared()).max(f64::MIN_POSITIVE);
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let qq = -(b + b.signum() * sq);
    let mut roots = [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }];
    roots.sort_by(|u, v| u.partial_cmp(v).unwrap_or(std::cmp::Ordering::Equal));
    roots.into_iter().find(|r| *r > 0.0).unwrap_or(f64::INFINITY)
}
