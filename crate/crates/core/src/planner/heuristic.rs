use nalgebra::DVector;

use crate::conic::recover_dual;
use crate::error::Result;
use crate::geometry::{contacts_for_pairs, Role, SystemModel};

/// Gap at which a tracked pair counts as touching.
pub const PHI_CONTACT: f64 = 1e-4;
const MAX_ITERATIONS: usize = 500;

#[derive(Clone, Debug)]
pub struct HeuristicResult {
    /// Robot configuration, used as the position command at every knot.
    pub u: DVector<f64>,
    pub iterations: usize,
    /// False when the cap was hit (or nothing was in range) before contact.
    pub reached: bool,
}

/// Robot-object pairs within the detection threshold at q.
fn tracked_pairs(sys: &SystemModel, q: &DVector<f64>) -> Vec<usize> {
    let thr = sys.phi_threshold();
    let pairs = sys.pairs();
    let idx: Vec<usize> = (0..pairs.len())
        .filter(|&i| {
            let roles = (sys.bodies[pairs[i].a].role, sys.bodies[pairs[i].b].role);
            matches!(roles, (Role::Object, Role::Robot) | (Role::Robot, Role::Object))
        })
        .collect();
    contacts_for_pairs(sys, q, &idx).into_iter().filter(|c| c.phi < thr).map(|c| c.pair).collect()
}

/// Pulls the robot toward the object along the reversed barrier force field.
///
/// Each pair still farther than [`PHI_CONTACT`] contributes τᵃ = −J_aᵀλ with λ
/// the central-path dual at ν = (φ, 0); the robot moves by h·K_a⁻¹τᵃ, with the
/// step shortened so no pair's predicted gap drops below PHI_CONTACT / 2.
pub fn initial_guess_heuristic(sys: &SystemModel, q0: &DVector<f64>, kappa_pull: f64) -> Result<HeuristicResult> {
    let mut q = q0.clone();
    let pairs = tracked_pairs(sys, q0);
    if pairs.is_empty() {
        return Ok(HeuristicResult { u: sys.robot_part(q0), iterations: 0, reached: false });
    }
    for it in 0..MAX_ITERATIONS {
        let contacts = contacts_for_pairs(sys, &q, &pairs);
        let far: Vec<_> = contacts.iter().filter(|c| c.phi > PHI_CONTACT).collect();
        if far.is_empty() {
            return Ok(HeuristicResult { u: sys.robot_part(&q), iterations: it, reached: true });
        }
        let mut dqa = DVector::zeros(sys.n_qa());
        for c in &far {
            let mut nu = DVector::zeros(c.dim);
            nu[0] = c.phi;
            let lam = recover_dual(&nu, c.mu, kappa_pull);
            let tau = -(c.jac_robot(sys).transpose() * lam);
            for k in 0..sys.n_qa() {
                dqa[k] += sys.h * tau[k] / sys.stiffness[k];
            }
        }
        let mut scale: f64 = 1.0;
        for c in &contacts {
            let drop = -(c.jac_robot(sys).row(0) * &dqa)[0];
            let room = c.phi - PHI_CONTACT / 2.0;
            if drop > room && drop > 0.0 {
                scale = scale.min(room.max(0.0) / drop);
            }
        }
        let qa = sys.robot_part(&q) + dqa * scale;
        q = sys.with_robot(&q, &qa);
    }
    Ok(HeuristicResult { u: sys.robot_part(&q), iterations: MAX_ITERATIONS, reached: false })
}
