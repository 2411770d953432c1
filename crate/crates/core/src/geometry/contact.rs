use nalgebra::{DMatrix, DVector};

use super::model::SystemModel;
use super::shapes::{signed_distance, Proximity};

/// Contact frame, Jacobian and Anitescu offset for one body pair at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactKinematics {
    /// Index into [`SystemModel::pairs`].
    pub pair: usize,
    pub body_a: usize,
    pub body_b: usize,
    pub phi: f64,
    pub mu: f64,
    /// Cone dimension: 1 when frictionless, 2 otherwise.
    pub dim: usize,
    /// d × n_q; row 0 is the normal row, row 1 (if present) the tangent row.
    pub jacobian: DMatrix<f64>,
    /// cᵢ = [φᵢ, 0]ᵀ − Jᵢ q.
    pub offset: DVector<f64>,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub witness_a: [f64; 2],
    pub witness_b: [f64; 2],
}

impl ContactKinematics {
    /// Object columns J_oᵢ (d × n_qo).
    pub fn jac_object(&self, sys: &SystemModel) -> DMatrix<f64> {
        self.jacobian.select_columns(&sys.object_indices)
    }

    /// Robot columns J_aᵢ (d × n_qa).
    pub fn jac_robot(&self, sys: &SystemModel) -> DMatrix<f64> {
        self.jacobian.select_columns(&sys.robot_indices)
    }

    pub fn normal_row(&self) -> DMatrix<f64> {
        self.jacobian.rows(0, 1).into_owned()
    }
}

/// Contact kinematics of one pair regardless of distance.
pub fn contact_for_pair(sys: &SystemModel, q: &DVector<f64>, pair: usize) -> ContactKinematics {
    let spec = sys.pairs()[pair];
    contact_from_spec(sys, q, pair, spec.a, spec.b, spec.mu)
}

fn contact_from_spec(sys: &SystemModel, q: &DVector<f64>, pair: usize, a: usize, b: usize, mu: f64) -> ContactKinematics {
    let qs = q.as_slice();
    let (ba, bb) = (&sys.bodies[a], &sys.bodies[b]);
    let prox: Proximity = signed_distance(&ba.geometry, &ba.pose(qs), &bb.geometry, &bb.pose(qs))
        .expect("pairs() filters unsupported combinations");
    let dim = if mu > 0.0 { 2 } else { 1 };
    let n = prox.normal;
    let t = [-n[1], n[0]];
    let ja = ba.point_jacobian(qs, prox.witness_a);
    let jb = bb.point_jacobian(qs, prox.witness_b);
    let rel = ja - jb;
    let nq = sys.n_q();
    let mut jac = DMatrix::zeros(dim, nq);
    for c in 0..nq {
        jac[(0, c)] = n[0] * rel[(0, c)] + n[1] * rel[(1, c)];
        if dim == 2 {
            jac[(1, c)] = t[0] * rel[(0, c)] + t[1] * rel[(1, c)];
        }
    }
    let mut offset = -(&jac * q);
    offset[0] += prox.phi;
    ContactKinematics {
        pair,
        body_a: a,
        body_b: b,
        phi: prox.phi,
        mu,
        dim,
        jacobian: jac,
        offset,
        normal: n,
        tangent: t,
        witness_a: prox.witness_a,
        witness_b: prox.witness_b,
    }
}

/// All pairs with φ < threshold, in pair order.
pub fn detect_contacts(sys: &SystemModel, q: &DVector<f64>, phi_threshold: f64) -> Vec<ContactKinematics> {
    sys.pairs()
        .iter()
        .enumerate()
        .map(|(k, s)| contact_from_spec(sys, q, k, s.a, s.b, s.mu))
        .filter(|c| c.phi < phi_threshold)
        .collect()
}

/// Contacts re-evaluated at `q` for a fixed list of pair indices.
pub fn contacts_for_pairs(sys: &SystemModel, q: &DVector<f64>, pairs: &[usize]) -> Vec<ContactKinematics> {
    let specs = sys.pairs();
    pairs
        .iter()
        .map(|&k| contact_from_spec(sys, q, k, specs[k].a, specs[k].b, specs[k].mu))
        .collect()
}

/// Minimum signed distance over all pairs (∞ for systems without pairs).
pub fn min_distance(sys: &SystemModel, q: &DVector<f64>) -> f64 {
    let qs = q.as_slice();
    sys.pairs()
        .iter()
        .map(|s| {
            let (ba, bb) = (&sys.bodies[s.a], &sys.bodies[s.b]);
            signed_distance(&ba.geometry, &ba.pose(qs), &bb.geometry, &bb.pose(qs)).map_or(f64::INFINITY, |p| p.phi)
        })
        .fold(f64::INFINITY, f64::min)
}
