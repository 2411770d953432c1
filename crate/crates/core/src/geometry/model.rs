use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::body::{Body, Role};
use super::shapes::CollisionGeometry;
use crate::error::{Error, Result};

/// Friction override for a named body pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrictionPair {
    pub a: String,
    pub b: String,
    pub mu: f64,
}

/// A candidate contact pair; `a` is the body the normal points toward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSpec {
    pub a: usize,
    pub b: usize,
    pub mu: f64,
}

/// Planar multibody system with an actuated/unactuated partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub bodies: Vec<Body>,
    pub object_indices: Vec<usize>,
    pub robot_indices: Vec<usize>,
    /// Diagonal of K_a, ordered like `robot_indices`.
    pub stiffness: Vec<f64>,
    /// M_o, rows ordered like `object_indices`.
    pub object_mass: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub tau_object: Vec<f64>,
    #[serde(default)]
    pub tau_robot: Vec<f64>,
    /// Planar gravity applied to object translational DOFs through M_o.
    #[serde(default)]
    pub gravity: [f64; 2],
    #[serde(default)]
    pub default_mu: f64,
    #[serde(default)]
    pub friction: Vec<FrictionPair>,
    /// Contact detection threshold; defaults to the largest object dimension.
    #[serde(default)]
    pub phi_threshold: Option<f64>,
    #[serde(default)]
    pub robot_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub robot_upper: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn default_h() -> f64 {
    0.1
}

impl SystemModel {
    pub fn n_q(&self) -> usize {
        self.object_indices.len() + self.robot_indices.len()
    }

    pub fn n_qo(&self) -> usize {
        self.object_indices.len()
    }

    pub fn n_qa(&self) -> usize {
        self.robot_indices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        let n = self.n_q();
        let mut seen = vec![false; n];
        for &i in self.object_indices.iter().chain(&self.robot_indices) {
            if i >= n || seen[i] {
                return bad(format!("index sets must be disjoint and exhaustive over 0..{n}"));
            }
            seen[i] = true;
        }
        if self.stiffness.len() != self.n_qa() || self.stiffness.iter().any(|k| !(*k > 0.0)) {
            return bad("stiffness needs one positive entry per actuated DOF".into());
        }
        if self.object_mass.len() != self.n_qo() || self.object_mass.iter().any(|r| r.len() != self.n_qo()) {
            return bad("object mass must be n_qo x n_qo".into());
        }
        if self.n_qo() > 0 && self.mass_matrix().cholesky().is_none() {
            return bad("object mass must be symmetric positive definite".into());
        }
        let m = self.mass_matrix();
        if (&m - m.transpose()).abs().max() > 1e-12 {
            return bad("object mass must be symmetric".into());
        }
        if !(self.h > 0.0) || !(self.epsilon >= 0.0) {
            return bad("h must be positive and epsilon nonnegative".into());
        }
        if !self.tau_object.is_empty() && self.tau_object.len() != self.n_qo() {
            return bad("tau_object length must equal n_qo".into());
        }
        if !self.tau_robot.is_empty() && self.tau_robot.len() != self.n_qa() {
            return bad("tau_robot length must equal n_qa".into());
        }
        for lim in [&self.robot_lower, &self.robot_upper].into_iter().flatten() {
            if lim.len() != self.n_qa() {
                return bad("robot limits must have n_qa entries".into());
            }
        }
        for b in &self.bodies {
            b.geometry.validate()?;
            if matches!(b.geometry, CollisionGeometry::HalfPlane { .. }) && b.role != Role::Static {
                return bad(format!("half-plane body '{}' must be static", b.name));
            }
            for i in b.dof_indices() {
                if i >= n {
                    return bad(format!("body '{}' references DOF {i} out of range", b.name));
                }
                let is_obj = self.object_indices.contains(&i);
                if (b.role == Role::Object) != is_obj {
                    return bad(format!("body '{}' DOF {i} is on the wrong side of the partition", b.name));
                }
            }
        }
        if self.friction.iter().any(|f| !(f.mu >= 0.0)) || !(self.default_mu >= 0.0) {
            return bad("friction coefficients must be nonnegative".into());
        }
        Ok(())
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n_qo();
        DMatrix::from_fn(n, n, |i, j| self.object_mass[i][j])
    }

    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.stiffness.clone()))
    }

    /// τᵒ including the gravity contribution.
    pub fn tau_object_total(&self) -> DVector<f64> {
        let mut tau = if self.tau_object.is_empty() {
            DVector::zeros(self.n_qo())
        } else {
            DVector::from_vec(self.tau_object.clone())
        };
        if self.gravity != [0.0, 0.0] {
            for b in self.bodies.iter().filter(|b| b.role == Role::Object) {
                if let super::body::BodyKind::Free { x, y, .. } = &b.kind {
                    for (dof, g) in [(x, self.gravity[0]), (y, self.gravity[1])] {
                        if let Some(gi) = dof.index() {
                            let k = self.object_position(gi);
                            tau[k] += self.object_mass[k][k] * g;
                        }
                    }
                }
            }
        }
        tau
    }

    pub fn tau_robot_vec(&self) -> DVector<f64> {
        if self.tau_robot.is_empty() {
            DVector::zeros(self.n_qa())
        } else {
            DVector::from_vec(self.tau_robot.clone())
        }
    }

    fn object_position(&self, global: usize) -> usize {
        self.object_indices.iter().position(|&i| i == global).expect("object index")
    }

    pub fn object_part(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_qo(), self.object_indices.iter().map(|&i| q[i]))
    }

    pub fn robot_part(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_qa(), self.robot_indices.iter().map(|&i| q[i]))
    }

    pub fn join(&self, qo: &DVector<f64>, qa: &DVector<f64>) -> DVector<f64> {
        let mut q = DVector::zeros(self.n_q());
        for (k, &i) in self.object_indices.iter().enumerate() {
            q[i] = qo[k];
        }
        for (k, &i) in self.robot_indices.iter().enumerate() {
            q[i] = qa[k];
        }
        q
    }

    pub fn with_robot(&self, q: &DVector<f64>, qa: &DVector<f64>) -> DVector<f64> {
        self.join(&self.object_part(q), qa)
    }

    pub fn phi_threshold(&self) -> f64 {
        if let Some(t) = self.phi_threshold {
            return t;
        }
        self.bodies
            .iter()
            .filter(|b| b.role == Role::Object)
            .map(|b| b.geometry.size())
            .fold(0.0, f64::max)
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    fn pair_mu(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (&self.bodies[a].name, &self.bodies[b].name);
        self.friction
            .iter()
            .find(|f| (&f.a == na && &f.b == nb) || (&f.a == nb && &f.b == na))
            .map_or(self.default_mu, |f| f.mu)
    }

    /// Candidate contact pairs in deterministic (lexicographic body index) order.
    ///
    /// Every pair involves an object, or a robot body against a static body.
    pub fn pairs(&self) -> Vec<PairSpec> {
        let mut out = Vec::new();
        for i in 0..self.bodies.len() {
            for j in (i + 1)..self.bodies.len() {
                let (ri, rj) = (self.bodies[i].role, self.bodies[j].role);
                let keep = match (ri, rj) {
                    (Role::Object, _) | (_, Role::Object) => true,
                    (Role::Robot, Role::Static) | (Role::Static, Role::Robot) => true,
                    _ => false,
                };
                if !keep {
                    continue;
                }
                let both_planes = matches!(self.bodies[i].geometry, CollisionGeometry::HalfPlane { .. })
                    && matches!(self.bodies[j].geometry, CollisionGeometry::HalfPlane { .. });
                if both_planes {
                    continue;
                }
                // The object (or else the robot) is A so normals point into it.
                let a_first = match (ri, rj) {
                    (Role::Object, _) => true,
                    (_, Role::Object) => false,
                    (Role::Robot, _) => true,
                    _ => false,
                };
                let (a, b) = if a_first { (i, j) } else { (j, i) };
                out.push(PairSpec { a, b, mu: self.pair_mu(a, b) });
            }
        }
        out
    }

    pub fn robot_limits(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.n_qa();
        let lo = self.robot_lower.clone().map_or(DVector::from_element(n, f64::NEG_INFINITY), DVector::from_vec);
        let hi = self.robot_upper.clone().map_or(DVector::from_element(n, f64::INFINITY), DVector::from_vec);
        (lo, hi)
    }
}
