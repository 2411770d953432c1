//! Differential inverse kinematics for reduced-order sphere targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{solve_socp, Cone, ConicProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::geometry::{detect_contacts, Role, SystemModel};

/// Robot bodies whose frame origin is matched to a target, in body order.
pub fn tip_bodies(sys: &SystemModel) -> Vec<usize> {
    (0..sys.bodies.len()).filter(|&b| sys.bodies[b].role == Role::Robot).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    /// Per-iteration step box ε (rad or m).
    pub step: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions { step: 0.05, tol: 1e-4, max_iterations: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub qa: DVector<f64>,
    pub iterations: usize,
    /// √Σ‖p_k − p_des,k‖² at `qa`.
    pub residual: f64,
    /// Progress stalled (or the cap was hit) before reaching `tol`.
    pub stalled: bool,
}

fn tip_error(sys: &SystemModel, q: &DVector<f64>, tips: &[usize], targets: &[[f64; 2]]) -> f64 {
    tips.iter()
        .zip(targets)
        .map(|(&b, t)| {
            let p = sys.bodies[b].pose(q.as_slice());
            (p.x - t[0]).powi(2) + (p.y - t[1]).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Iterated QP: min Σ‖p_k + J_kδq − p_des,k‖² subject to linearized
/// non-penetration φᵢ + J_nᵢδq ≥ 0, joint limits and |δq| ≤ ε.
///
/// `q` supplies the object pose and the initial robot configuration; one
/// target per [`tip_bodies`] entry.
pub fn ik_project(sys: &SystemModel, q: &DVector<f64>, targets: &[[f64; 2]], opts: &IkOptions) -> Result<IkResult> {
    let tips = tip_bodies(sys);
    if targets.len() != tips.len() {
        return Err(Error::Dimension(format!("{} targets for {} tips", targets.len(), tips.len())));
    }
    let n = sys.n_qa();
    let (lo, hi) = sys.robot_limits();
    let mut q = q.clone();
    let mut err = tip_error(sys, &q, &tips, targets);
    let mut history = vec![err];
    let mut it = 0;
    while err >= opts.tol && it < opts.max_iterations {
        let qs = q.as_slice();
        let mut p = DMatrix::<f64>::identity(n, n) * 1e-10;
        let mut lin = DVector::zeros(n);
        for (&b, t) in tips.iter().zip(targets) {
            let pose = sys.bodies[b].pose(qs);
            let j = sys.bodies[b].point_jacobian(qs, [pose.x, pose.y]).select_columns(&sys.robot_indices);
            let r = DVector::from_row_slice(&[pose.x - t[0], pose.y - t[1]]);
            p += j.transpose() * &j * 2.0;
            lin += j.transpose() * r * 2.0;
        }
        let qa = sys.robot_part(&q);
        let mut cones = vec![];
        for c in detect_contacts(sys, &q, sys.phi_threshold()) {
            cones.push(Cone::new(c.jac_robot(sys).rows(0, 1).into_owned(), DVector::from_element(1, c.phi.max(0.0)), 0.0));
        }
        for k in 0..n {
            let e = DMatrix::from_fn(1, n, |_, c| if c == k { 1.0 } else { 0.0 });
            let up = (hi[k] - qa[k]).min(opts.step).max(0.0);
            let down = (qa[k] - lo[k]).min(opts.step).max(0.0);
            cones.push(Cone::new(-&e, DVector::from_element(1, up), 0.0));
            cones.push(Cone::new(e, DVector::from_element(1, down), 0.0));
        }
        let prog = ConicProgram::new(p, lin, None, cones)?;
        let sol = solve_socp(&prog, 1e-10);
        if sol.status != SolveStatus::Optimal {
            break;
        }
        q = sys.with_robot(&q, &(qa + &sol.x));
        err = tip_error(sys, &q, &tips, targets);
        history.push(err);
        it += 1;
        if it >= 10 && history[it - 10] - err < 1e-8 {
            break;
        }
    }
    Ok(IkResult { qa: sys.robot_part(&q), iterations: it, residual: err, stalled: err >= opts.tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::min_distance;
    use crate::scenario::systems::{planarhand, planarhand_antipodal, HAND_BALL_R, HAND_TIP_R};

    fn tips_of(sys: &SystemModel, q: &DVector<f64>) -> Vec<[f64; 2]> {
        tip_bodies(sys)
            .iter()
            .map(|&b| {
                let p = sys.bodies[b].pose(q.as_slice());
                [p.x, p.y]
            })
            .collect()
    }

    #[test]
    fn current_tips_need_no_iterations() {
        let sys = planarhand();
        let q = DVector::from_vec(planarhand_antipodal());
        let r = ik_project(&sys, &q, &tips_of(&sys, &q), &IkOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(!r.stalled);
    }

    #[test]
    fn recovers_antipodal_pose() {
        let sys = planarhand();
        let target = DVector::from_vec(planarhand_antipodal());
        let start = sys.with_robot(&target, &DVector::from_row_slice(&[0.9, -1.2, 2.2, 1.2]));
        let r = ik_project(&sys, &start, &tips_of(&sys, &target), &IkOptions::default()).unwrap();
        let q = sys.with_robot(&target, &r.qa);
        let got = tips_of(&sys, &q);
        for (g, t) in got.iter().zip(tips_of(&sys, &target)) {
            assert!((g[0] - t[0]).hypot(g[1] - t[1]) < 1e-3, "{got:?}");
        }
        assert!(min_distance(&sys, &q) > -1e-6);
    }

    #[test]
    fn target_inside_object_stops_at_surface() {
        let sys = planarhand();
        let q = DVector::from_vec(planarhand_antipodal());
        let d = HAND_BALL_R + HAND_TIP_R;
        let r = ik_project(&sys, &q, &[[-0.3 * d, 0.0], [d, 0.0]], &IkOptions::default()).unwrap();
        assert!(r.stalled && r.residual > 1e-3);
        assert!(min_distance(&sys, &sys.with_robot(&q, &r.qa)) > -1e-3);
    }
}
