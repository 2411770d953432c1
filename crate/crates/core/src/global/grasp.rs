//! Contact-configuration synthesis: MPC value, wrench-set robustness, sampling.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_distance, signed_distance, BodyKind, CollisionGeometry, Dof, Role, SystemModel};
use crate::planner::{mpc_rollout, MpcLog, PlannerParams};
use crate::rng;
use crate::sensitivity::{linearize, QMode};
use crate::trust_region::{build, hull_and_radius, wrench_set_samples, TrustRegionSpec, Variant};

use super::ik::{ik_project, tip_bodies};

/// Samples drawn from the RA-CTR for the wrench hull.
pub const HULL_SAMPLES: usize = 1000;
/// Non-penetration slack accepted for sampled configurations.
pub const PENETRATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Value {
    /// Cost of the realized rollout; +∞ when MPC hit an infeasible subproblem.
    pub v: f64,
    pub infeasible: bool,
}

/// Copy of `params` with the robot rows of Q zeroed.
pub fn object_only_weights(sys: &SystemModel, params: &PlannerParams) -> PlannerParams {
    let mut p = params.clone();
    for &i in &sys.robot_indices {
        p.q_weights[i] = 0.0;
    }
    p
}

/// ‖q_g − q_H‖²_Q + Σ‖u_t − u_{t−1}‖²_R along a logged rollout (u₋₁ = q₀ᵃ).
pub fn rollout_cost(sys: &SystemModel, log: &MpcLog, goal: &DVector<f64>, params: &PlannerParams) -> f64 {
    let qf = log.final_q();
    let terminal: f64 = (goal - qf).iter().zip(&params.q_weights).map(|(d, w)| w * d * d).sum();
    let mut prev = sys.robot_part(&log.qs[0]);
    let mut effort = 0.0;
    for u in &log.us {
        effort += params.r_weight * (u - &prev).norm_squared();
        prev = u.clone();
    }
    terminal + effort
}

/// Finite-horizon MPC value of the robot configuration `qa` for moving the
/// object from `qo` to the object rows of `goal`.
pub fn value_function(
    sys: &SystemModel,
    qa: &DVector<f64>,
    qo: &DVector<f64>,
    goal: &DVector<f64>,
    params: &PlannerParams,
) -> Result<Value> {
    let q0 = sys.join(qo, qa);
    if min_distance(sys, &q0) < -PENETRATION_TOL {
        return Err(Error::InvalidModel("value_function needs a collision-free configuration".into()));
    }
    let p = object_only_weights(sys, params);
    let log = mpc_rollout(sys, &q0, goal, &p, false)?;
    if log.infeasible_at.is_some() {
        return Ok(Value { v: f64::INFINITY, infeasible: true });
    }
    Ok(Value { v: rollout_cost(sys, &log, goal, &p), infeasible: false })
}

/// Settings for the wrench-set robustness metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSpec {
    pub radius: f64,
    pub kappa: f64,
    pub samples: usize,
    pub seed: u64,
    pub joint_limits: bool,
}

impl RobustnessSpec {
    pub fn from_params(params: &PlannerParams, seed: u64) -> Self {
        RobustnessSpec {
            radius: params.radius,
            kappa: params.kappa,
            samples: HULL_SAMPLES,
            seed,
            joint_limits: params.joint_limits,
        }
    }
}

/// Radius of the largest origin-centred ball inside the sampled wrench set at
/// q̄ = (qa, qo), ū = qa. Zero without contacts or for a flat hull.
pub fn robustness_radius(sys: &SystemModel, qa: &DVector<f64>, qo: &DVector<f64>, spec: &RobustnessSpec) -> Result<f64> {
    let q = sys.join(qo, qa);
    let lin = linearize(sys, &q, qa, spec.kappa, QMode::Skip)?;
    if lin.contacts.is_empty() {
        return Ok(0.0);
    }
    let mut tr = TrustRegionSpec::isotropic(Variant::RaCtr, sys, spec.radius, spec.kappa);
    if spec.joint_limits {
        tr = tr.with_joint_limits(sys);
    }
    let cs = build(&tr, sys, &lin)?;
    let samples = match cs.sample(spec.samples, spec.seed) {
        Ok(s) => s.samples,
        Err(Error::DegenerateRegion { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let w = wrench_set_samples(sys, &lin, &samples);
    Ok(hull_and_radius(&w.total, sys.n_qo())?.radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub joint_limits: bool,
    pub non_penetration: bool,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.joint_limits && self.non_penetration
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub qa: DVector<f64>,
    pub value: f64,
    pub radius: f64,
    pub alpha: f64,
    /// value − α·radius².
    pub cost: f64,
    pub feasibility: Feasibility,
    /// Index of the proposal that produced this candidate.
    pub index: usize,
}

impl GraspCandidate {
    pub fn new(qa: DVector<f64>, value: f64, radius: f64, alpha: f64, feasibility: Feasibility, index: usize) -> Self {
        GraspCandidate { qa, value, radius, alpha, cost: value - alpha * radius * radius, feasibility, index }
    }
}

/// Joint-limit and non-penetration checks of (qa, qo).
pub fn feasibility(sys: &SystemModel, qa: &DVector<f64>, qo: &DVector<f64>) -> Feasibility {
    let (lo, hi) = sys.robot_limits();
    let joint_limits = (0..qa.len()).all(|k| qa[k] >= lo[k] && qa[k] <= hi[k]);
    let non_penetration = min_distance(sys, &sys.join(qo, qa)) >= -PENETRATION_TOL;
    Feasibility { joint_limits, non_penetration }
}

/// Index of the single object body (the one carrying the object DOFs).
fn object_body(sys: &SystemModel) -> Result<usize> {
    sys.bodies
        .iter()
        .position(|b| b.role == Role::Object)
        .ok_or_else(|| Error::InvalidModel("no object body".into()))
}

/// Box the reduced-order spheres are drawn from: the object bounding box grown
/// by the detection threshold, clipped to reachable space by the caller's IK.
fn sphere_box(sys: &SystemModel, qo: &DVector<f64>) -> Result<([f64; 2], [f64; 2])> {
    let ob = object_body(sys)?;
    let q = sys.join(qo, &DVector::zeros(sys.n_qa()));
    let pose = sys.bodies[ob].pose(q.as_slice());
    let half = sys.bodies[ob].geometry.size() + sys.phi_threshold();
    Ok(([pose.x - half, pose.y - half], [pose.x + half, pose.y + half]))
}

/// Moves `tip` (placed at `p`) onto the object surface along the shortest direction.
fn project_to_surface(sys: &SystemModel, qo: &DVector<f64>, p: [f64; 2], tip: &CollisionGeometry) -> Result<[f64; 2]> {
    let ob = object_body(sys)?;
    let q = sys.join(qo, &DVector::zeros(sys.n_qa()));
    let body = &sys.bodies[ob];
    let prox = signed_distance(
        tip,
        &crate::geometry::Pose2::new(p[0], p[1], 0.0),
        &body.geometry,
        &body.pose(q.as_slice()),
    )?;
    Ok([p[0] - prox.phi * prox.normal[0], p[1] - prox.phi * prox.normal[1]])
}

/// Robot configuration for sphere targets: free discs take the target
/// directly, chains are solved with [`ik_project`] from `qa_init`.
fn realize(sys: &SystemModel, qo: &DVector<f64>, targets: &[[f64; 2]], qa_init: &DVector<f64>) -> Result<DVector<f64>> {
    let tips = tip_bodies(sys);
    let mut q = sys.join(qo, qa_init);
    let mut chain_targets = vec![];
    for (k, &b) in tips.iter().enumerate() {
        match &sys.bodies[b].kind {
            BodyKind::Free { x, y, .. } => {
                if let (Dof::Index(ix), Dof::Index(iy)) = (x, y) {
                    q[*ix] = targets[k][0];
                    q[*iy] = targets[k][1];
                }
                chain_targets.push(None);
            }
            BodyKind::Chain { .. } => chain_targets.push(Some(targets[k])),
        }
    }
    if chain_targets.iter().all(Option::is_none) {
        return Ok(sys.robot_part(&q));
    }
    let full: Vec<[f64; 2]> = chain_targets
        .iter()
        .zip(&tips)
        .map(|(t, &b)| t.unwrap_or_else(|| {
            let p = sys.bodies[b].pose(q.as_slice());
            [p.x, p.y]
        }))
        .collect();
    Ok(ik_project(sys, &q, &full, &Default::default())?.qa)
}

/// Rejection-sampled grasp search minimizing C = V − αr².
///
/// Sphere positions come from a box around the object and are projected onto
/// its surface; ties keep the lowest proposal index.
#[allow(clippy::too_many_arguments)]
pub fn sample_grasps(
    sys: &SystemModel,
    qo: &DVector<f64>,
    goal: &DVector<f64>,
    n: usize,
    alpha: f64,
    seed: u64,
    params: &PlannerParams,
    qa_init: &DVector<f64>,
) -> Result<(GraspCandidate, Vec<GraspCandidate>)> {
    let (lo, hi) = sphere_box(sys, qo)?;
    let tips = tip_bodies(sys);
    let proposals: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let targets: Vec<[f64; 2]> = tips
                .iter()
                .map(|&b| {
                    let p = [r.random_range(lo[0]..hi[0]), r.random_range(lo[1]..hi[1])];
                    project_to_surface(sys, qo, p, &sys.bodies[b].geometry)
                })
                .collect::<Result<_>>()?;
            realize(sys, qo, &targets, qa_init)
        })
        .collect::<Result<_>>()?;
    let mut scored = vec![];
    for (i, qa) in proposals.into_iter().enumerate() {
        let f = feasibility(sys, &qa, qo);
        if !f.ok() {
            continue;
        }
        let v = value_function(sys, &qa, qo, goal, params)?;
        let r = robustness_radius(sys, &qa, qo, &RobustnessSpec::from_params(params, seed ^ i as u64))?;
        scored.push(GraspCandidate::new(qa, v.v, r, alpha, f, i));
    }
    let best = scored
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.index.cmp(&b.index)))
        .cloned()
        .ok_or(Error::NoFeasibleGrasp)?;
    Ok((best, scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::systems::{planarhand, planarhand_antipodal, planarhand_single_sided};

    #[test]
    fn cost_is_recomputable() {
        let c = GraspCandidate::new(
            DVector::zeros(2),
            0.3,
            0.1,
            2.0,
            Feasibility { joint_limits: true, non_penetration: true },
            0,
        );
        assert_eq!(c.cost, c.value - c.alpha * c.radius * c.radius);
    }

    #[test]
    fn antipodal_grasp_is_more_robust() {
        let sys = planarhand();
        let p = crate::scenario::builtin("planarhand").unwrap().params;
        let spec = RobustnessSpec::from_params(&p, 0);
        let split = |q: Vec<f64>| {
            let q = DVector::from_vec(q);
            (sys.robot_part(&q), sys.object_part(&q))
        };
        let (qa, qo) = split(planarhand_antipodal());
        let ra = robustness_radius(&sys, &qa, &qo, &spec).unwrap();
        let (qb, qob) = split(planarhand_single_sided());
        let rb = robustness_radius(&sys, &qb, &qob, &spec).unwrap();
        assert!(ra > rb);
    }

    #[test]
    fn open_hand_has_zero_radius() {
        let sys = planarhand();
        let p = crate::scenario::builtin("planarhand").unwrap().params;
        let q = DVector::from_vec(planarhand_antipodal());
        let qo = sys.object_part(&q);
        // fingertips pulled back well past the detection threshold
        let mut far = q.clone();
        let tips_away = crate::scenario::systems::hand_config([0.0, 0.0], [-0.14, -0.05], [0.14, -0.05]);
        far = sys.with_robot(&far, &sys.robot_part(&DVector::from_vec(tips_away)));
        let r = robustness_radius(&sys, &sys.robot_part(&far), &qo, &RobustnessSpec::from_params(&p, 0)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn radius_is_stable_in_the_sample_count() {
        let sys = planarhand();
        let p = crate::scenario::builtin("planarhand").unwrap().params;
        let q = DVector::from_vec(planarhand_antipodal());
        let (qa, qo) = (sys.robot_part(&q), sys.object_part(&q));
        let r = |n| robustness_radius(&sys, &qa, &qo, &RobustnessSpec { samples: n, ..RobustnessSpec::from_params(&p, 3) }).unwrap();
        let (r1, r2) = (r(1000), r(4000));
        assert!((r1 - r2).abs() <= 0.05 * r2, "{r1} vs {r2}");
    }

    #[test]
    fn larger_alpha_never_picks_a_less_robust_grasp() {
        let s = crate::scenario::builtin("planarhand").unwrap();
        let q = s.q0();
        let (qa, qo) = (s.system.robot_part(&q), s.system.object_part(&q));
        let goal = s.goal().unwrap();
        let (_, scored) = sample_grasps(&s.system, &qo, &goal, 12, 0.0, 4, &s.params, &qa).unwrap();
        assert!(!scored.is_empty());
        let pick = |alpha: f64| {
            scored
                .iter()
                .min_by(|a, b| (a.value - alpha * a.radius * a.radius).total_cmp(&(b.value - alpha * b.radius * b.radius)).then(a.index.cmp(&b.index)))
                .unwrap()
                .radius
        };
        let radii: Vec<f64> = [0.0, 1.0, 1e2, 1e4, 1e6].iter().map(|&a| pick(a)).collect();
        assert!(radii.windows(2).all(|w| w[1] >= w[0]), "{radii:?}");
    }
}
