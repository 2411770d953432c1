//! Built-in planar systems. K_a, M_o and μ are calibration parameters.

use std::f64::consts::PI;

use crate::geometry::{Body, BodyKind, CollisionGeometry, Dof, FrictionPair, Pose2, RectMember, Role, SystemModel};

fn free(name: &str, role: Role, x: Dof, y: Dof, theta: Dof, geometry: CollisionGeometry) -> Body {
    Body { name: name.into(), role, kind: BodyKind::Free { x, y, theta }, geometry }
}

use Dof::{Fixed, Index};

/// Box (object, x) pushed by a ball (robot, x); both 0.2 m wide.
pub fn pusher1d() -> SystemModel {
    SystemModel {
        bodies: vec![
            free("box", Role::Object, Index(0), Fixed(0.0), Fixed(0.0), CollisionGeometry::rect(0.1, 0.1)),
            free("ball", Role::Robot, Index(1), Fixed(0.0), Fixed(0.0), CollisionGeometry::circle(0.1)),
        ],
        object_indices: vec![0],
        robot_indices: vec![1],
        stiffness: vec![100.0],
        object_mass: vec![vec![0.01]],
        epsilon: 1.0,
        h: 0.1,
        tau_object: vec![],
        tau_robot: vec![],
        gravity: [0.0, 0.0],
        default_mu: 0.0,
        friction: vec![],
        phi_threshold: None,
        robot_lower: None,
        robot_upper: None,
    }
}

/// Box (object, x) between two balls (robot, x each).
pub fn squeeze1d() -> SystemModel {
    SystemModel {
        bodies: vec![
            free("box", Role::Object, Index(0), Fixed(0.0), Fixed(0.0), CollisionGeometry::rect(0.1, 0.1)),
            free("left", Role::Robot, Index(1), Fixed(0.0), Fixed(0.0), CollisionGeometry::circle(0.1)),
            free("right", Role::Robot, Index(2), Fixed(0.0), Fixed(0.0), CollisionGeometry::circle(0.1)),
        ],
        object_indices: vec![0],
        robot_indices: vec![1, 2],
        stiffness: vec![100.0, 100.0],
        object_mass: vec![vec![0.01]],
        ..pusher1d()
    }
}

/// Box sliding frictionlessly in x; a ball moving in xy rubs on its top face.
///
/// The ball touches the box top at ball y = 0.
pub fn boxball2d() -> SystemModel {
    SystemModel {
        bodies: vec![
            free("box", Role::Object, Index(0), Fixed(-0.2), Fixed(0.0), CollisionGeometry::rect(0.3, 0.1)),
            free("ball", Role::Robot, Index(1), Index(2), Fixed(0.0), CollisionGeometry::circle(0.1)),
        ],
        object_indices: vec![0],
        robot_indices: vec![1, 2],
        stiffness: vec![100.0, 100.0],
        object_mass: vec![vec![0.1]],
        default_mu: 0.5,
        phi_threshold: Some(0.2),
        ..pusher1d()
    }
}

pub const HAND_LINKS: [f64; 2] = [0.1, 0.1];
pub const HAND_BALL_R: f64 = 0.05;
pub const HAND_TIP_R: f64 = 0.02;

/// Ball (object, xy) and two planar two-link fingers with fingertip spheres.
pub fn planarhand() -> SystemModel {
    let finger = |name: &str, base: Pose2, j: usize| Body {
        name: name.into(),
        role: Role::Robot,
        kind: BodyKind::Chain { base, joints: vec![j, j + 1], lengths: HAND_LINKS.to_vec() },
        geometry: CollisionGeometry::circle(HAND_TIP_R),
    };
    SystemModel {
        bodies: vec![
            free("ball", Role::Object, Index(0), Index(1), Fixed(0.0), CollisionGeometry::circle(HAND_BALL_R)),
            finger("left", Pose2::new(-0.15, -0.1, 0.0), 2),
            finger("right", Pose2::new(0.15, -0.1, 0.0), 4),
        ],
        object_indices: vec![0, 1],
        robot_indices: vec![2, 3, 4, 5],
        stiffness: vec![1.0; 4],
        object_mass: vec![vec![0.05, 0.0], vec![0.0, 0.05]],
        default_mu: 0.5,
        phi_threshold: Some(0.1),
        robot_lower: Some(vec![-PI; 4]),
        robot_upper: Some(vec![PI; 4]),
        ..pusher1d()
    }
}

/// The T shape: a 0.2 × 0.05 bar over a 0.05 × 0.15 stem, COM at the origin.
pub fn tee_geometry() -> CollisionGeometry {
    CollisionGeometry::Union {
        members: vec![
            RectMember { half_extents: [0.1, 0.025], offset: [0.0, 3.0 / 70.0], angle: 0.0 },
            RectMember { half_extents: [0.025, 0.075], offset: [0.0, -4.0 / 70.0], angle: 0.0 },
        ],
    }
}

fn tee_inertia(mass: f64) -> f64 {
    // (area, w, h, offset) per member; densities equal
    let parts = [(0.01, 0.2, 0.05, 3.0 / 70.0), (0.0075, 0.05, 0.15, -4.0 / 70.0)];
    let area: f64 = parts.iter().map(|p| p.0).sum();
    parts
        .iter()
        .map(|&(a, w, h, d)| {
            let m = mass * a / area;
            m * (w * w + h * h) / 12.0 + m * d * d
        })
        .sum()
}

pub const TEE_MASS: f64 = 0.1;
pub const PUSHER_R: f64 = 0.01;

/// T-shaped object (x, y, θ) pushed on a table by a disc (x, y).
pub fn pushert() -> SystemModel {
    let inertia = tee_inertia(TEE_MASS);
    SystemModel {
        bodies: vec![
            free("tee", Role::Object, Index(0), Index(1), Index(2), tee_geometry()),
            free("pusher", Role::Robot, Index(3), Index(4), Fixed(0.0), CollisionGeometry::circle(PUSHER_R)),
        ],
        object_indices: vec![0, 1, 2],
        robot_indices: vec![3, 4],
        stiffness: vec![100.0, 100.0],
        object_mass: vec![vec![TEE_MASS, 0.0, 0.0], vec![0.0, TEE_MASS, 0.0], vec![0.0, 0.0, inertia]],
        default_mu: 0.5,
        friction: vec![FrictionPair { a: "tee".into(), b: "pusher".into(), mu: 0.5 }],
        ..pusher1d()
    }
}

pub const SQUARE_HALF: f64 = 0.05;
pub const FINGER_R: f64 = 0.01;

/// Square (x, y, θ) on a palm manipulated by two free fingertip discs.
pub fn palmsquare() -> SystemModel {
    let mass = 0.1;
    let inertia = mass * (4.0 * SQUARE_HALF * SQUARE_HALF * 2.0) / 12.0;
    SystemModel {
        bodies: vec![
            free("square", Role::Object, Index(0), Index(1), Index(2), CollisionGeometry::rect(SQUARE_HALF, SQUARE_HALF)),
            free("f1", Role::Robot, Index(3), Index(4), Fixed(0.0), CollisionGeometry::circle(FINGER_R)),
            free("f2", Role::Robot, Index(5), Index(6), Fixed(0.0), CollisionGeometry::circle(FINGER_R)),
        ],
        object_indices: vec![0, 1, 2],
        robot_indices: vec![3, 4, 5, 6],
        stiffness: vec![100.0; 4],
        object_mass: vec![vec![mass, 0.0, 0.0], vec![0.0, mass, 0.0], vec![0.0, 0.0, inertia]],
        default_mu: 0.5,
        phi_threshold: Some(0.1),
        robot_lower: Some(vec![-0.2; 4]),
        robot_upper: Some(vec![0.2; 4]),
        ..pusher1d()
    }
}

/// Joint angles placing a two-link tip at `target` relative to `base`.
///
/// `elbow` picks the sign of the second joint; `None` when out of reach.
pub fn two_link_ik(base: [f64; 2], lengths: [f64; 2], target: [f64; 2], elbow: f64) -> Option<[f64; 2]> {
    let (dx, dy) = (target[0] - base[0], target[1] - base[1]);
    let [l1, l2] = lengths;
    let c2 = (dx * dx + dy * dy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let q2 = elbow.signum() * c2.acos();
    let q1 = dy.atan2(dx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    Some([q1, q2])
}

const HAND_LEFT_BASE: [f64; 2] = [-0.15, -0.1];
const HAND_RIGHT_BASE: [f64; 2] = [0.15, -0.1];

/// Hand configuration with the tips at the given points (elbows outward).
pub fn hand_config(ball: [f64; 2], left_tip: [f64; 2], right_tip: [f64; 2]) -> Vec<f64> {
    let l = two_link_ik(HAND_LEFT_BASE, HAND_LINKS, left_tip, -1.0).expect("left tip reachable");
    let r = two_link_ik(HAND_RIGHT_BASE, HAND_LINKS, right_tip, 1.0).expect("right tip reachable");
    vec![ball[0], ball[1], l[0], l[1], r[0], r[1]]
}

/// Both tips touching the ball at the ends of a horizontal diameter.
pub fn planarhand_antipodal() -> Vec<f64> {
    let d = HAND_BALL_R + HAND_TIP_R;
    hand_config([0.0, 0.0], [-d, 0.0], [d, 0.0])
}

/// Left tip touching the ball from the left, right tip from below.
pub fn planarhand_single_sided() -> Vec<f64> {
    let d = HAND_BALL_R + HAND_TIP_R;
    hand_config([0.0, 0.0], [-d, 0.0], [0.0, -d])
}

/// Pusher touching the bottom of the stem of a tee at the origin.
pub fn pushert_default_q0() -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.0, -4.0 / 70.0 - 0.075 - PUSHER_R]
}

/// A pusher-tee configuration with the pusher touching a uniformly random
/// point of the tee outline (tee at the origin).
pub fn pushert_contact_nominal(rng: &mut impl rand::Rng) -> Vec<f64> {
    let CollisionGeometry::Union { members } = tee_geometry() else { unreachable!() };
    let perims: Vec<f64> = members.iter().map(|m| 4.0 * (m.half_extents[0] + m.half_extents[1])).collect();
    let total: f64 = perims.iter().sum();
    loop {
        let mut s = rng.random::<f64>() * total;
        let k = if s < perims[0] { 0 } else { 1 };
        if k == 1 {
            s -= perims[0];
        }
        let m = &members[k];
        let [hx, hy] = m.half_extents;
        // walk the rectangle outline counter-clockwise from the bottom-left corner
        let (p, n) = if s < 2.0 * hx {
            ([-hx + s, -hy], [0.0, -1.0])
        } else if s < 2.0 * hx + 2.0 * hy {
            ([hx, -hy + s - 2.0 * hx], [1.0, 0.0])
        } else if s < 4.0 * hx + 2.0 * hy {
            ([hx - (s - 2.0 * hx - 2.0 * hy), hy], [0.0, 1.0])
        } else {
            ([-hx, hy - (s - 4.0 * hx - 2.0 * hy)], [-1.0, 0.0])
        };
        let c = [m.offset[0] + p[0] + n[0] * PUSHER_R, m.offset[1] + p[1] + n[1] * PUSHER_R];
        let q = vec![0.0, 0.0, 0.0, c[0], c[1]];
        let phi = crate::geometry::min_distance(&pushert(), &nalgebra::DVector::from_row_slice(&q));
        if phi > -1e-9 && phi < 1e-6 {
            return q;
        }
    }
}

/// Base two-finger grasps of the palm square: fingers on opposite faces,
/// offset so the pair applies a counter-clockwise (first) or clockwise couple.
pub fn palmsquare_grasps() -> [Vec<f64>; 2] {
    let d = SQUARE_HALF + FINGER_R;
    let off = 0.03;
    [vec![0.0, 0.0, 0.0, -d, -off, d, off], vec![0.0, 0.0, 0.0, -d, off, d, -off]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for s in [pusher1d(), squeeze1d(), boxball2d(), planarhand(), pushert(), palmsquare()] {
            s.validate().unwrap();
        }
    }

    #[test]
    fn hand_configs_touch() {
        use crate::geometry::min_distance;
        use nalgebra::DVector;
        let sys = planarhand();
        for q in [planarhand_antipodal(), planarhand_single_sided()] {
            assert!(min_distance(&sys, &DVector::from_vec(q)).abs() < 1e-9);
        }
        let body = &sys.bodies[1];
        let tip = body.pose(&planarhand_antipodal()).x;
        assert!((tip + HAND_BALL_R + HAND_TIP_R).abs() < 1e-12);
    }

    #[test]
    fn pushert_nominals_touch() {
        use crate::geometry::min_distance;
        use nalgebra::DVector;
        let mut r = crate::rng::stream(3, 0);
        for _ in 0..50 {
            let q = pushert_contact_nominal(&mut r);
            assert!(min_distance(&pushert(), &DVector::from_vec(q)).abs() < 1e-6);
        }
        assert!(min_distance(&pushert(), &DVector::from_vec(pushert_default_q0())).abs() < 1e-9);
    }
}
