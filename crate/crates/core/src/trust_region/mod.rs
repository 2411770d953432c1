//! Trust-region family over (δq, δu) or δu, its sampling, motion sets and wrench sets.

mod hull;

pub use hull::{hull_2d, hull_3d, hull_and_radius, HullRadius};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conic::{cone_margin, Cone};
use crate::error::{Error, Result};
use crate::geometry::SystemModel;
use crate::rng;
use crate::sensitivity::LinearizedDynamics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Etr,
    Ctr,
    RCtr,
    /// Ellipsoid over δu only.
    AEtr,
    ACtr,
    RaCtr,
}

impl Variant {
    pub fn action_only(self) -> bool {
        matches!(self, Variant::AEtr | Variant::ACtr | Variant::RaCtr)
    }

    pub fn has_primal(self) -> bool {
        matches!(self, Variant::Ctr | Variant::ACtr)
    }

    pub fn has_dual(self) -> bool {
        !matches!(self, Variant::Etr | Variant::AEtr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Etr => "etr",
            Variant::Ctr => "ctr",
            Variant::RCtr => "r-ctr",
            Variant::AEtr => "a-etr",
            Variant::ACtr => "a-ctr",
            Variant::RaCtr => "ra-ctr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Variant::Etr, Variant::Ctr, Variant::RCtr, Variant::AEtr, Variant::ACtr, Variant::RaCtr]
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
    }
}

#[derive(Clone, Debug)]
pub struct TrustRegionSpec {
    pub variant: Variant,
    /// SPD shape over δz: δzᵀΣδz ≤ 1.
    pub sigma: DMatrix<f64>,
    pub kappa: f64,
    /// Bounds on the commanded robot position ū + δu.
    pub joint_limits: Option<(DVector<f64>, DVector<f64>)>,
    /// Bounds on the steady-state torque K_a(q₊ᵃ − u).
    pub torque_limits: Option<(DVector<f64>, DVector<f64>)>,
}

impl TrustRegionSpec {
    /// Σ = r⁻²I over the variant's variable layout.
    pub fn isotropic(variant: Variant, sys: &SystemModel, radius: f64, kappa: f64) -> Self {
        let n = if variant.action_only() { sys.n_qa() } else { sys.n_q() + sys.n_qa() };
        TrustRegionSpec {
            variant,
            sigma: DMatrix::identity(n, n) / (radius * radius),
            kappa,
            joint_limits: None,
            torque_limits: None,
        }
    }

    pub fn with_joint_limits(mut self, sys: &SystemModel) -> Self {
        self.joint_limits = Some(sys.robot_limits());
        self
    }
}

/// lo ≤ aᵀz + c ≤ hi.
#[derive(Clone, Debug)]
pub struct BoxRow {
    pub a: DVector<f64>,
    pub c: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct TrustRegionConstraints {
    pub variant: Variant,
    pub n_q: usize,
    pub n_u: usize,
    /// Upper Cholesky factor R with Σ = RᵀR, so δzᵀΣδz = ‖Rδz‖².
    pub ellipsoid: DMatrix<f64>,
    /// Ĵᵢq̂₊ + ĉᵢ ∈ Kᵢ.
    pub primal: Vec<Cone>,
    /// λ̂₊ᵢ ∈ Kᵢ*, expressed as cones with μ' = 1/μ.
    pub dual: Vec<Cone>,
    pub boxes: Vec<BoxRow>,
    /// False when some nominal dual sits on the friction-cone boundary.
    pub nominal_dual_interior: bool,
}

fn dual_as_cone(a: DMatrix<f64>, c: DVector<f64>, mu: f64) -> Cone {
    let m = if c.len() == 1 { 0.0 } else { 1.0 / mu };
    Cone::new(a, c, m)
}

/// Constraint set of the requested variant around `lin`.
pub fn build(spec: &TrustRegionSpec, sys: &SystemModel, lin: &LinearizedDynamics) -> Result<TrustRegionConstraints> {
    let action_only = spec.variant.action_only();
    let (n_q, n_u) = (if action_only { 0 } else { sys.n_q() }, sys.n_qa());
    let nz = n_q + n_u;
    if spec.sigma.nrows() != nz || spec.sigma.ncols() != nz {
        return Err(Error::Dimension(format!("Σ must be {nz}x{nz}")));
    }
    let ellipsoid = spec
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("Σ must be SPD".into()))?
        .l()
        .transpose();

    let stack = |left: &DMatrix<f64>, right: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(right.nrows(), nz);
        if !action_only {
            m.columns_mut(0, n_q).copy_from(left);
        }
        m.columns_mut(n_q, n_u).copy_from(right);
        m
    };

    let mut primal = vec![];
    let mut dual = vec![];
    let mut interior = true;
    for (i, c) in lin.contacts.iter().enumerate() {
        if spec.variant.has_primal() {
            let a = stack(&(&c.jacobian * &lin.a), &(&c.jacobian * &lin.b));
            let off = &c.jacobian * &lin.f_nominal + &c.offset;
            primal.push(Cone::new(a, off, c.mu));
        }
        if spec.variant.has_dual() {
            let cone = dual_as_cone(stack(&lin.c[i], &lin.d[i]), lin.lambda_nominal[i].clone(), c.mu);
            interior &= cone.margin(&cone.c) > 0.0;
            dual.push(cone);
        }
    }

    let mut boxes = vec![];
    if let Some((lo, hi)) = &spec.joint_limits {
        for k in 0..n_u {
            let mut a = DVector::zeros(nz);
            a[n_q + k] = 1.0;
            boxes.push(BoxRow { a, c: lin.u_bar[k], lo: lo[k], hi: hi[k] });
        }
    }
    if let Some((lo, hi)) = &spec.torque_limits {
        // τ = K_a(f̄ᵃ + Aᵃδq + Bᵃδu − ū − δu)
        for (k, &gk) in sys.robot_indices.iter().enumerate() {
            let ka = sys.stiffness[k];
            let mut a = DVector::zeros(nz);
            for j in 0..n_q {
                a[j] = ka * lin.a[(gk, j)];
            }
            for j in 0..n_u {
                a[n_q + j] = ka * lin.b[(gk, j)];
            }
            a[n_q + k] -= ka;
            let c = ka * (lin.f_nominal[gk] - lin.u_bar[k]);
            boxes.push(BoxRow { a, c, lo: lo[k], hi: hi[k] });
        }
    }
    Ok(TrustRegionConstraints { variant: spec.variant, n_q, n_u, ellipsoid, primal, dual, boxes, nominal_dual_interior: interior })
}

pub const DEGENERATE_MIN_RATE: f64 = 1e-3;
pub const DEGENERATE_PROPOSALS: usize = 100_000;
const CHUNK: usize = 1024;

#[derive(Clone, Debug)]
pub struct SampleSet {
    pub samples: Vec<DVector<f64>>,
    pub proposals: usize,
}

impl SampleSet {
    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / self.proposals.max(1) as f64
    }
}

impl TrustRegionConstraints {
    pub fn dim(&self) -> usize {
        self.n_q + self.n_u
    }

    /// Splits δz into (δq, δu); δq is `None` for action-only sets.
    pub fn split(&self, z: &DVector<f64>) -> (Option<DVector<f64>>, DVector<f64>) {
        let dq = (self.n_q > 0).then(|| z.rows(0, self.n_q).into_owned());
        (dq, z.rows(self.n_q, self.n_u).into_owned())
    }

    pub fn in_ellipsoid(&self, z: &DVector<f64>) -> bool {
        (&self.ellipsoid * z).norm_squared() <= 1.0 + 1e-12
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        self.in_ellipsoid(z)
            && self.primal.iter().all(|c| c.margin(&c.slack(z)) >= 0.0)
            && self.dual.iter().all(|c| c.margin(&c.slack(z)) >= 0.0)
            && self.boxes.iter().all(|b| {
                let v = b.a.dot(z) + b.c;
                v >= b.lo && v <= b.hi
            })
    }

    /// Every constraint as `a z + c ∈ K`, ellipsoid first as (1; Rz) ∈ SOC.
    pub fn as_cones(&self) -> Vec<Cone> {
        let nz = self.dim();
        let mut a = DMatrix::zeros(nz + 1, nz);
        a.rows_mut(1, nz).copy_from(&self.ellipsoid);
        let mut c = DVector::zeros(nz + 1);
        c[0] = 1.0;
        let mut out = vec![Cone::new(a, c, 1.0)];
        out.extend(self.primal.iter().cloned());
        out.extend(self.dual.iter().cloned());
        for b in &self.boxes {
            let row = DMatrix::from_row_slice(1, nz, b.a.as_slice());
            if b.lo.is_finite() {
                out.push(Cone::new(row.clone(), DVector::from_element(1, b.c - b.lo), 0.0));
            }
            if b.hi.is_finite() {
                out.push(Cone::new(-row, DVector::from_element(1, b.hi - b.c), 0.0));
            }
        }
        out
    }

    /// Uniform draw from the ellipsoid.
    pub fn propose<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r: f64 = rng.random::<f64>().powf(1.0 / n as f64);
        let y = g.normalize() * r;
        self.ellipsoid.clone().solve_upper_triangular(&y).expect("SPD factor")
    }

    /// Rejection sampling until `n` samples are accepted.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        let mut samples = Vec::with_capacity(n);
        let mut proposals = 0usize;
        let mut chunk = 0u64;
        while samples.len() < n {
            let mut rng = rng::stream(seed, chunk);
            chunk += 1;
            for _ in 0..CHUNK {
                let z = self.propose(&mut rng);
                proposals += 1;
                if self.contains(&z) {
                    samples.push(z);
                    if samples.len() == n {
                        break;
                    }
                }
            }
            let rate = samples.len() as f64 / proposals as f64;
            if proposals >= DEGENERATE_PROPOSALS && rate < DEGENERATE_MIN_RATE {
                return Err(Error::DegenerateRegion { rate, proposals });
            }
        }
        Ok(SampleSet { samples, proposals })
    }
}

/// q̂₊ = f̄ + Aδq + Bδu per sample; `rows` selects output coordinates.
pub fn motion_set_samples(
    lin: &LinearizedDynamics,
    cs: &TrustRegionConstraints,
    samples: &[DVector<f64>],
    rows: Option<&[usize]>,
) -> Vec<DVector<f64>> {
    samples
        .iter()
        .map(|z| {
            let (dq, du) = cs.split(z);
            let full = lin.predict_q(dq.as_ref(), &du);
            match rows {
                Some(r) => full.select_rows(r),
                None => full,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WrenchSamples {
    /// λ̂₊ᵢ per sample, per contact.
    pub forces: Vec<Vec<DVector<f64>>>,
    /// J_oᵢᵀλ̂₊ᵢ per sample, per contact.
    pub contact_wrenches: Vec<Vec<DVector<f64>>>,
    /// τᵒ + Σᵢ wᵢ per sample.
    pub total: Vec<DVector<f64>>,
}

/// Object wrenches generated by δu samples under the action-only dual model.
pub fn wrench_set_samples(sys: &SystemModel, lin: &LinearizedDynamics, du_samples: &[DVector<f64>]) -> WrenchSamples {
    let tau = sys.tau_object_total();
    let jo: Vec<DMatrix<f64>> = lin.contacts.iter().map(|c| c.jac_object(sys).transpose()).collect();
    let mut out = WrenchSamples { forces: vec![], contact_wrenches: vec![], total: vec![] };
    for du in du_samples {
        let mut total = tau.clone();
        let mut fs = vec![];
        let mut ws = vec![];
        for (i, j) in jo.iter().enumerate() {
            let lam = lin.predict_lambda(i, None, du);
            let w = j * &lam;
            total += &w;
            fs.push(lam);
            ws.push(w);
        }
        out.forces.push(fs);
        out.contact_wrenches.push(ws);
        out.total.push(total);
    }
    out
}

/// q̂₊ᵒ = q̄ᵒ + (h²/ε)M_o⁻¹w.
pub fn motion_set_from_wrench(sys: &SystemModel, q_bar: &DVector<f64>, wrenches: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let m_inv = sys
        .mass_matrix()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("object mass matrix singular".into()))?;
    let qo = sys.object_part(q_bar);
    let s = sys.h * sys.h / sys.epsilon;
    Ok(wrenches.iter().map(|w| &qo + &m_inv * w * s).collect())
}

/// Membership of a raw point in Kᵢ* (d = 1: λ ≥ 0).
pub fn in_friction_cone(lambda: &DVector<f64>, mu: f64) -> bool {
    crate::conic::dual_cone_margin(lambda, mu) >= 0.0
}

/// Primal cone margin of an affine row group at z (diagnostics).
pub fn primal_margin(cone: &Cone, z: &DVector<f64>) -> f64 {
    cone_margin(&cone.slack(z), cone.mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::systems::{pusher1d, squeeze1d};
    use crate::sensitivity::{linearize, QMode};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn action_etr_accepts_everything() {
        let sys = squeeze1d();
        let lin = linearize(&sys, &v(&[0.0, -0.19, 0.19]), &v(&[-0.19, 0.19]), 100.0, QMode::Skip).unwrap();
        let cs = build(&TrustRegionSpec::isotropic(Variant::AEtr, &sys, 0.05, 100.0), &sys, &lin).unwrap();
        let s = cs.sample(2000, 3).unwrap();
        assert_eq!(s.proposals, 2000);
        assert!(s.samples.iter().all(|z| z.norm() <= 0.05 + 1e-12));
    }

    #[test]
    fn pusher_dual_blocks_pulls() {
        let sys = pusher1d();
        let (q, u) = (v(&[0.2, 0.0]), v(&[0.0]));
        let lin = linearize(&sys, &q, &u, 1e4, QMode::Skip).unwrap();
        let cs = build(&TrustRegionSpec::isotropic(Variant::RaCtr, &sys, 0.05, 1e4), &sys, &lin).unwrap();
        for k in 0..=500 {
            let du = -0.05 + 1e-4 * k as f64;
            if du < -0.02 {
                assert!(!cs.contains(&v(&[du])), "δu = {du}");
            }
        }
        assert!(cs.contains(&v(&[0.03])));
    }

    #[test]
    fn sampling_is_deterministic() {
        let sys = squeeze1d();
        let lin = linearize(&sys, &v(&[0.0, -0.19, 0.19]), &v(&[-0.19, 0.19]), 100.0, QMode::Skip).unwrap();
        let cs = build(&TrustRegionSpec::isotropic(Variant::RaCtr, &sys, 0.05, 100.0), &sys, &lin).unwrap();
        let a = cs.sample(100, 9).unwrap();
        let b = cs.sample(100, 9).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.acceptance_rate() < 1.0);
    }
}
