use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PlannerParams;
use crate::error::{Error, Result};
use crate::geometry::SystemModel;
use crate::rng;
use crate::sensitivity::{linearize, QMode};
use crate::trust_region::{build, TrustRegionSpec, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalPair {
    pub q0: DVector<f64>,
    /// Full configuration; only the object rows are meaningful.
    pub goal: DVector<f64>,
}

/// Object goals on the boundary of the action-only object motion set at q̄.
///
/// The RA-CTR is built with radius `scale · params.radius`; each goal follows a
/// random ray in δu-space to the set boundary and maps it through f̄ᵒ + Bᵒδu.
pub fn generate_goals(
    sys: &SystemModel,
    q_bar: &DVector<f64>,
    n: usize,
    seed: u64,
    params: &PlannerParams,
    scale: f64,
) -> Result<Vec<GoalPair>> {
    let u_bar = sys.robot_part(q_bar);
    let lin = linearize(sys, q_bar, &u_bar, params.kappa, QMode::Skip)?;
    let with_object = |du: &DVector<f64>| {
        let qp = lin.predict_q(None, du);
        let mut g = q_bar.clone();
        for &i in &sys.object_indices {
            g[i] = qp[i];
        }
        g
    };
    if scale <= 0.0 {
        let g = with_object(&DVector::zeros(sys.n_qa()));
        return Ok(vec![GoalPair { q0: q_bar.clone(), goal: g }; n]);
    }
    let spec = TrustRegionSpec::isotropic(Variant::RaCtr, sys, scale * params.radius, params.kappa);
    let cs = build(&spec, sys, &lin)?;
    if !cs.nominal_dual_interior {
        return Err(Error::DegenerateMotionSet("nominal dual on the cone boundary".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let d = DVector::from_fn(cs.dim(), |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        let ray = cs.ellipsoid.clone().solve_upper_triangular(&d).expect("SPD factor");
        let mut t = 1.0;
        if !cs.contains(&ray) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if cs.contains(&(&ray * mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t = lo;
        }
        out.push(GoalPair { q0: q_bar.clone(), goal: with_object(&(ray * t)) });
    }
    let base = with_object(&DVector::zeros(sys.n_qa()));
    let spread = out.iter().map(|g| (&g.goal - &base).amax()).fold(0.0, f64::max);
    if n > 0 && spread < 1e-9 {
        return Err(Error::DegenerateMotionSet("object motion set has no extent".into()));
    }
    Ok(out)
}
