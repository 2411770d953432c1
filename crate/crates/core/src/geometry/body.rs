//! Planar rigid bodies: free bodies with up to three DOFs and revolute chains.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::shapes::{CollisionGeometry, Pose2};

/// A pose coordinate that is either driven by a configuration entry or fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dof {
    Index(usize),
    Fixed(f64),
}

impl Dof {
    fn value(&self, q: &[f64]) -> f64 {
        match self {
            Dof::Index(i) => q[*i],
            Dof::Fixed(v) => *v,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Dof::Index(i) => Some(*i),
            Dof::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BodyKind {
    Free { x: Dof, y: Dof, theta: Dof },
    /// Serial revolute chain; the body frame sits at the distal end of the last link.
    Chain { base: Pose2, joints: Vec<usize>, lengths: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Object,
    Robot,
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    pub role: Role,
    pub kind: BodyKind,
    pub geometry: CollisionGeometry,
}

impl Body {
    pub fn fixed(name: &str, pose: Pose2, geometry: CollisionGeometry) -> Self {
        Body {
            name: name.into(),
            role: Role::Static,
            kind: BodyKind::Free { x: Dof::Fixed(pose.x), y: Dof::Fixed(pose.y), theta: Dof::Fixed(pose.theta) },
            geometry,
        }
    }

    pub fn pose(&self, q: &[f64]) -> Pose2 {
        match &self.kind {
            BodyKind::Free { x, y, theta } => Pose2::new(x.value(q), y.value(q), theta.value(q)),
            BodyKind::Chain { base, joints, lengths } => {
                let mut p = [base.x, base.y];
                let mut th = base.theta;
                for (j, l) in joints.iter().zip(lengths) {
                    th += q[*j];
                    p[0] += l * th.cos();
                    p[1] += l * th.sin();
                }
                Pose2::new(p[0], p[1], th)
            }
        }
    }

    /// ∂(x, y, θ)/∂q as a 3 × n_q matrix.
    pub fn pose_jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let n = q.len();
        let mut jac = DMatrix::zeros(3, n);
        match &self.kind {
            BodyKind::Free { x, y, theta } => {
                for (row, dof) in [x, y, theta].iter().enumerate() {
                    if let Some(i) = dof.index() {
                        jac[(row, i)] = 1.0;
                    }
                }
            }
            BodyKind::Chain { base, joints, lengths } => {
                let mut angles = Vec::with_capacity(joints.len());
                let mut th = base.theta;
                for j in joints {
                    th += q[*j];
                    angles.push(th);
                }
                for (k, j) in joints.iter().enumerate() {
                    for m in k..joints.len() {
                        jac[(0, *j)] -= lengths[m] * angles[m].sin();
                        jac[(1, *j)] += lengths[m] * angles[m].cos();
                    }
                    jac[(2, *j)] = 1.0;
                }
            }
        }
        jac
    }

    /// Velocity Jacobian (2 × n_q) of the material point currently at world position `p`.
    pub fn point_jacobian(&self, q: &[f64], p: [f64; 2]) -> DMatrix<f64> {
        let pose = self.pose(q);
        let jp = self.pose_jacobian(q);
        let rx = p[0] - pose.x;
        let ry = p[1] - pose.y;
        let mut out = DMatrix::zeros(2, q.len());
        for c in 0..q.len() {
            out[(0, c)] = jp[(0, c)] - ry * jp[(2, c)];
            out[(1, c)] = jp[(1, c)] + rx * jp[(2, c)];
        }
        out
    }

    /// Configuration indices this body depends on.
    pub fn dof_indices(&self) -> Vec<usize> {
        match &self.kind {
            BodyKind::Free { x, y, theta } => [x, y, theta].iter().filter_map(|d| d.index()).collect(),
            BodyKind::Chain { joints, .. } => joints.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_jacobian_matches_finite_differences() {
        let body = Body {
            name: "finger".into(),
            role: Role::Robot,
            kind: BodyKind::Chain { base: Pose2::new(0.1, -0.2, 0.3), joints: vec![0, 1], lengths: vec![0.1, 0.08] },
            geometry: CollisionGeometry::circle(0.02),
        };
        let q = [0.4, -0.7];
        let jac = body.pose_jacobian(&q);
        let h = 1e-6;
        for c in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[c] += h;
            qm[c] -= h;
            let (a, b) = (body.pose(&qp), body.pose(&qm));
            let fd = [(a.x - b.x) / (2.0 * h), (a.y - b.y) / (2.0 * h), (a.theta - b.theta) / (2.0 * h)];
            for r in 0..3 {
                assert!((jac[(r, c)] - fd[r]).abs() < 1e-8);
            }
        }
    }
}
