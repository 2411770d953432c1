//! Second-order penalty-contact plant.
//!
//! Independent of the conic solver: contacts are springs with damping and a
//! regularized Coulomb law, the robot is a PD-driven point mass per DOF and the
//! object carries viscous damping εM_o/h, the damping whose overdamped limit is
//! the quasidynamic object balance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{detect_contacts, Role, SystemModel};
use crate::planner::SecondOrderPlant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftParams {
    pub dt: f64,
    /// k_n (N/m).
    pub contact_stiffness: f64,
    /// d in F_n = max(0, −k_n φ − d φ̇).
    pub contact_damping: f64,
    /// s in F_t = −min(μF_n, s|v_t|) sign(v_t).
    pub friction_slope: f64,
    /// Reflected inertia per robot DOF.
    pub robot_mass: Vec<f64>,
    /// D in K_a(u − qᵃ) − D vᵃ.
    pub robot_damping: Vec<f64>,
    /// Viscous damping on the object (n_qo × n_qo, row-major).
    pub object_damping: Vec<Vec<f64>>,
    /// ‖q‖∞ beyond this counts as divergence.
    pub workspace_bound: f64,
    /// Robot-object gap above which contact counts as lost.
    pub lost_contact_phi: f64,
    /// Consecutive plant steps with a lost contact that make one event.
    pub lost_contact_steps: usize,
}

const ROBOT_OMEGA: f64 = 50.0;

impl SoftParams {
    /// Defaults derived from the model: robot natural frequency 50 rad/s with
    /// critical damping, contact frequency 0.5/dt on the lightest mass,
    /// half-critical contact damping.
    pub fn for_system(sys: &SystemModel) -> Self {
        let dt = 1e-3;
        let robot_mass: Vec<f64> = sys.stiffness.iter().map(|k| k / (ROBOT_OMEGA * ROBOT_OMEGA)).collect();
        let robot_damping = robot_mass.iter().map(|m| 2.0 * m * ROBOT_OMEGA).collect();
        let m_min = robot_mass
            .iter()
            .copied()
            .chain((0..sys.n_qo()).map(|i| sys.object_mass[i][i]))
            .fold(f64::INFINITY, f64::min);
        let contact_stiffness = m_min * (0.5f64 / dt).powi(2);
        let object_damping = sys.object_mass.iter().map(|row| row.iter().map(|m| sys.epsilon * m / sys.h).collect()).collect();
        SoftParams {
            dt,
            contact_stiffness,
            contact_damping: (contact_stiffness * m_min).sqrt(),
            friction_slope: 0.5 * m_min / dt,
            robot_mass,
            robot_damping,
            object_damping,
            workspace_bound: 10.0,
            lost_contact_phi: 5e-3,
            lost_contact_steps: 5,
        }
    }

    pub fn validate(&self, sys: &SystemModel) -> Result<()> {
        if !(self.dt > 0.0) || !(self.contact_stiffness > 0.0) {
            return Err(Error::InvalidModel("soft plant needs dt > 0 and k_n > 0".into()));
        }
        if self.robot_mass.len() != sys.n_qa() || self.robot_damping.len() != sys.n_qa() || self.object_damping.len() != sys.n_qo() {
            return Err(Error::Dimension("soft plant parameters do not match the system".into()));
        }
        if self.robot_mass.iter().any(|m| !(*m > 0.0)) || (0..sys.n_qo()).any(|i| !(sys.object_mass[i][i] > 0.0)) {
            return Err(Error::InvalidModel("soft plant masses must be positive".into()));
        }
        Ok(())
    }

    /// Object block M_o, robot block diag(robot_mass).
    pub fn mass(&self, sys: &SystemModel) -> DMatrix<f64> {
        let n = sys.n_q();
        let mut m = DMatrix::zeros(n, n);
        for (a, &i) in sys.object_indices.iter().enumerate() {
            for (b, &j) in sys.object_indices.iter().enumerate() {
                m[(i, j)] = sys.object_mass[a][b];
            }
        }
        for (a, &i) in sys.robot_indices.iter().enumerate() {
            m[(i, i)] = self.robot_mass[a];
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftPlantState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub time: f64,
    /// Work done by the controller and the applied generalized forces so far.
    pub work: f64,
}

impl SoftPlantState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let v = DVector::zeros(q.len());
        SoftPlantState { q, v, time: 0.0, work: 0.0 }
    }
}

pub fn kinetic_energy(sys: &SystemModel, params: &SoftParams, state: &SoftPlantState) -> f64 {
    0.5 * state.v.dot(&(params.mass(sys) * &state.v))
}

/// One semi-implicit Euler step of length `dt` with command `u` held.
pub fn step_soft(sys: &SystemModel, params: &SoftParams, state: &SoftPlantState, u: &DVector<f64>, dt: f64) -> Result<SoftPlantState> {
    let (q, v) = (&state.q, &state.v);
    if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::PlantDiverged("non-finite state".into()));
    }
    // inputs: PD actuation and the applied generalized forces; the ledger counts their work
    let mut f_in = DVector::zeros(sys.n_q());
    let qa = sys.robot_part(q);
    let tau_a = sys.tau_robot_vec();
    for (a, &i) in sys.robot_indices.iter().enumerate() {
        f_in[i] = sys.stiffness[a] * (u[a] - qa[a]) - params.robot_damping[a] * v[i] + tau_a[a];
    }
    let tau_o = sys.tau_object_total();
    for (a, &i) in sys.object_indices.iter().enumerate() {
        f_in[i] = tau_o[a];
    }
    let mut f = f_in.clone();
    for (a, &i) in sys.object_indices.iter().enumerate() {
        for (b, &j) in sys.object_indices.iter().enumerate() {
            f[i] -= params.object_damping[a][b] * v[j];
        }
    }
    for c in detect_contacts(sys, q, 0.0) {
        let jn = c.jacobian.row(0);
        let phi_dot = jn.dot(&v.transpose());
        let fn_ = (-params.contact_stiffness * c.phi - params.contact_damping * phi_dot).max(0.0);
        f += jn.transpose() * fn_;
        if c.dim == 2 {
            let jt = c.jacobian.row(1);
            let vt = jt.dot(&v.transpose());
            let ft = -(c.mu * fn_).min(params.friction_slope * vt.abs()) * vt.signum();
            f += jt.transpose() * ft;
        }
    }
    let v_next = v + params.mass(sys).cholesky().ok_or_else(|| Error::InvalidModel("mass matrix not SPD".into()))?.solve(&f) * dt;
    let q_next = q + &v_next * dt;
    if q_next.iter().chain(v_next.iter()).any(|x| !x.is_finite()) || q_next.amax() > params.workspace_bound {
        return Err(Error::PlantDiverged(format!("state left the workspace bound {}", params.workspace_bound)));
    }
    let work = state.work + f_in.dot(&(v + &v_next)) * 0.5 * dt;
    Ok(SoftPlantState { q: q_next, v: v_next, time: state.time + dt, work })
}

/// Smallest gap over robot-object pairs (∞ without such pairs).
fn robot_object_gap(sys: &SystemModel, q: &DVector<f64>) -> f64 {
    let pairs = sys.pairs();
    detect_contacts(sys, q, f64::INFINITY)
        .iter()
        .filter(|c| {
            let roles = (sys.bodies[pairs[c.pair].a].role, sys.bodies[pairs[c.pair].b].role);
            matches!(roles, (Role::Object, Role::Robot) | (Role::Robot, Role::Object))
        })
        .map(|c| c.phi)
        .fold(f64::INFINITY, f64::min)
}

/// The soft plant stepped for one model step h per command.
#[derive(Clone, Debug)]
pub struct SoftPlant {
    pub sys: SystemModel,
    pub params: SoftParams,
    pub state: SoftPlantState,
    pub lost_contact_events: usize,
    lost_run: usize,
    /// Previous command; each new one is ramped from it over the step.
    last_u: DVector<f64>,
}

impl SoftPlant {
    pub fn new(sys: SystemModel, params: SoftParams, q0: DVector<f64>) -> Result<Self> {
        params.validate(&sys)?;
        let last_u = sys.robot_part(&q0);
        Ok(SoftPlant { sys, params, state: SoftPlantState::at_rest(q0), lost_contact_events: 0, lost_run: 0, last_u })
    }

    pub fn substeps(&self) -> usize {
        (self.sys.h / self.params.dt).round().max(1.0) as usize
    }
}

impl SecondOrderPlant for SoftPlant {
    fn configuration(&self) -> DVector<f64> {
        self.state.q.clone()
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<()> {
        let n = self.substeps();
        let dt = self.sys.h / n as f64;
        for k in 1..=n {
            let target = &self.last_u + (u - &self.last_u) * (k as f64 / n as f64);
            self.state = step_soft(&self.sys, &self.params, &self.state, &target, dt)?;
        }
        self.last_u = u.clone();
        if robot_object_gap(&self.sys, &self.state.q) > self.params.lost_contact_phi {
            self.lost_run += 1;
            if self.lost_run == self.params.lost_contact_steps + 1 {
                self.lost_contact_events += 1;
            }
        } else {
            self.lost_run = 0;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqdc::rollout_nonsmooth;
    use crate::scenario::systems::pusher1d;

    #[test]
    fn resting_object_stays_put() {
        let sys = pusher1d();
        let q0 = DVector::from_row_slice(&[0.2, 0.0]);
        let mut plant = SoftPlant::new(sys.clone(), SoftParams::for_system(&sys), q0.clone()).unwrap();
        let u = sys.robot_part(&q0);
        for _ in 0..20 {
            plant.apply(&u).unwrap();
        }
        assert!((plant.configuration() - q0).amax() < 1e-9);
    }

    #[test]
    fn slow_push_matches_quasidynamic_displacement() {
        let sys = pusher1d();
        // ball face at the box face
        let q0 = DVector::from_row_slice(&[0.2, 0.0]);
        let inputs: Vec<DVector<f64>> = (1..=40).map(|k| DVector::from_element(1, 0.001 * k as f64)).collect();
        let hold: Vec<DVector<f64>> = inputs.iter().cloned().chain(std::iter::repeat_n(inputs[39].clone(), 20)).collect();
        let qd = rollout_nonsmooth(&sys, &q0, &hold).unwrap();
        let mut plant = SoftPlant::new(sys.clone(), SoftParams::for_system(&sys), q0.clone()).unwrap();
        for u in &hold {
            plant.apply(u).unwrap();
        }
        let oracle = qd.last().unwrap()[0] - q0[0];
        let soft = plant.configuration()[0] - q0[0];
        assert!(oracle > 0.01);
        assert!((soft - oracle).abs() <= 0.1 * oracle, "soft {soft} vs quasidynamic {oracle}");
    }

    #[test]
    fn kinetic_energy_bounded_by_work() {
        let sys = crate::scenario::systems::pushert();
        let params = SoftParams::for_system(&sys);
        let q0 = DVector::from_vec(crate::scenario::systems::pushert_default_q0());
        let mut s = SoftPlantState::at_rest(q0.clone());
        let e0 = 0.0;
        for k in 0..1000 {
            let t = k as f64 * params.dt;
            let u = DVector::from_row_slice(&[0.02 * (3.0 * t).sin(), q0[4] + 0.05 * t]);
            s = step_soft(&sys, &params, &s, &u, params.dt).unwrap();
            assert!(kinetic_energy(&sys, &params, &s) <= e0 + s.work + 1e-9, "step {k}");
        }
    }

    #[test]
    fn replays_are_bit_identical() {
        let sys = pusher1d();
        let run = || {
            let mut p = SoftPlant::new(sys.clone(), SoftParams::for_system(&sys), DVector::from_row_slice(&[0.2, 0.0])).unwrap();
            for k in 0..10 {
                p.apply(&DVector::from_element(1, 0.003 * k as f64)).unwrap();
            }
            p.state
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn blowup_is_reported() {
        let sys = pusher1d();
        let params = SoftParams { workspace_bound: 0.5, ..SoftParams::for_system(&sys) };
        let mut p = SoftPlant::new(sys, params, DVector::from_row_slice(&[0.2, 0.0])).unwrap();
        let err = (0..50).try_for_each(|_| p.apply(&DVector::from_element(1, 5.0)));
        assert!(matches!(err, Err(Error::PlantDiverged(_))));
    }
}
