//! Planar primitives and signed-distance queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar pose (x, y, θ).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Maps a point from the pose frame into the parent frame.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a parent-frame point into the pose frame.
    pub fn inverse_apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn compose(&self, local: &Pose2) -> Pose2 {
        let p = self.apply([local.x, local.y]);
        Pose2::new(p[0], p[1], self.theta + local.theta)
    }
}

/// One rectangle of a rigid union, given in the body frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectMember {
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub angle: f64,
}

/// Collision primitive attached to a body frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CollisionGeometry {
    Circle {
        radius: f64,
        #[serde(default)]
        offset: [f64; 2],
    },
    Rect {
        half_extents: [f64; 2],
        #[serde(default)]
        offset: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    /// The set {p : normal·p ≤ offset}; only meaningful on static bodies.
    HalfPlane { normal: [f64; 2], offset: f64 },
    Union { members: Vec<RectMember> },
}

impl CollisionGeometry {
    pub fn circle(radius: f64) -> Self {
        CollisionGeometry::Circle { radius, offset: [0.0, 0.0] }
    }

    pub fn rect(hx: f64, hy: f64) -> Self {
        CollisionGeometry::Rect { half_extents: [hx, hy], offset: [0.0, 0.0], angle: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        match self {
            CollisionGeometry::Circle { radius, .. } => {
                if !(*radius > 0.0) {
                    return bad("circle radius must be positive");
                }
            }
            CollisionGeometry::Rect { half_extents, .. } => {
                if !(half_extents[0] > 0.0 && half_extents[1] > 0.0) {
                    return bad("rectangle half-extents must be positive");
                }
            }
            CollisionGeometry::HalfPlane { normal, .. } => {
                let n = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return bad("half-plane normal must be unit length");
                }
            }
            CollisionGeometry::Union { members } => {
                if members.is_empty() {
                    return bad("union needs at least one member");
                }
                for m in members {
                    if !(m.half_extents[0] > 0.0 && m.half_extents[1] > 0.0) {
                        return bad("union member half-extents must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest extent (diameter-like size) of the shape, used for default thresholds.
    pub fn size(&self) -> f64 {
        match self {
            CollisionGeometry::Circle { radius, .. } => 2.0 * radius,
            CollisionGeometry::Rect { half_extents, .. } => 2.0 * half_extents[0].max(half_extents[1]),
            CollisionGeometry::HalfPlane { .. } => f64::INFINITY,
            CollisionGeometry::Union { members } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for m in members {
                    for c in rect_corners(&Prim::rect_of(m, &Pose2::default())) {
                        for k in 0..2 {
                            lo[k] = lo[k].min(c[k]);
                            hi[k] = hi[k].max(c[k]);
                        }
                    }
                }
                (hi[0] - lo[0]).max(hi[1] - lo[1])
            }
        }
    }

    /// True if the world point lies inside the shape (boundary counts as inside).
    pub fn contains_point(&self, pose: &Pose2, p: [f64; 2]) -> bool {
        self.primitives(pose).iter().any(|prim| prim_point_distance(prim, p) <= 0.0)
    }

    fn primitives(&self, pose: &Pose2) -> Vec<Prim> {
        match self {
            CollisionGeometry::Circle { radius, offset } => {
                vec![Prim::Circle { c: pose.apply(*offset), r: *radius }]
            }
            CollisionGeometry::Rect { half_extents, offset, angle } => {
                let m = RectMember { half_extents: *half_extents, offset: *offset, angle: *angle };
                vec![Prim::rect_of(&m, pose)]
            }
            CollisionGeometry::HalfPlane { normal, offset } => {
                // Half-planes are expressed in the body frame as well.
                let n = pose.rotate(*normal);
                let p0 = pose.apply([normal[0] * offset, normal[1] * offset]);
                vec![Prim::HalfPlane { n, d: n[0] * p0[0] + n[1] * p0[1] }]
            }
            CollisionGeometry::Union { members } => {
                members.iter().map(|m| Prim::rect_of(m, pose)).collect()
            }
        }
    }
}

/// Result of a signed-distance query between shapes A and B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proximity {
    pub phi: f64,
    pub witness_a: [f64; 2],
    pub witness_b: [f64; 2],
    /// Unit normal pointing from B toward A.
    pub normal: [f64; 2],
}

impl Proximity {
    fn flipped(self) -> Self {
        Proximity {
            phi: self.phi,
            witness_a: self.witness_b,
            witness_b: self.witness_a,
            normal: [-self.normal[0], -self.normal[1]],
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Prim {
    Circle { c: [f64; 2], r: f64 },
    Rect { pose: Pose2, h: [f64; 2] },
    HalfPlane { n: [f64; 2], d: f64 },
}

impl Prim {
    fn rect_of(m: &RectMember, pose: &Pose2) -> Prim {
        let local = Pose2::new(m.offset[0], m.offset[1], m.angle);
        Prim::Rect { pose: pose.compose(&local), h: m.half_extents }
    }
}

/// Signed distance between two geometries placed at world poses.
///
/// Ties (coincident centres) resolve to the +x normal; unions take the
/// minimum over members with ties kept at the lowest member index.
pub fn signed_distance(
    geom_a: &CollisionGeometry,
    pose_a: &Pose2,
    geom_b: &CollisionGeometry,
    pose_b: &Pose2,
) -> Result<Proximity> {
    let pa = geom_a.primitives(pose_a);
    let pb = geom_b.primitives(pose_b);
    let mut best: Option<Proximity> = None;
    for a in &pa {
        for b in &pb {
            let prox = prim_distance(a, b)?;
            if best.map_or(true, |cur| prox.phi < cur.phi) {
                best = Some(prox);
            }
        }
    }
    Ok(best.expect("geometries always have at least one primitive"))
}

fn prim_distance(a: &Prim, b: &Prim) -> Result<Proximity> {
    match (a, b) {
        (Prim::Circle { c: ca, r: ra }, Prim::Circle { c: cb, r: rb }) => Ok(circle_circle(*ca, *ra, *cb, *rb)),
        (Prim::Circle { c, r }, Prim::Rect { pose, h }) => Ok(circle_rect(*c, *r, pose, *h)),
        (Prim::Rect { pose, h }, Prim::Circle { c, r }) => Ok(circle_rect(*c, *r, pose, *h).flipped()),
        (Prim::Circle { c, r }, Prim::HalfPlane { n, d }) => Ok(circle_halfplane(*c, *r, *n, *d)),
        (Prim::HalfPlane { n, d }, Prim::Circle { c, r }) => Ok(circle_halfplane(*c, *r, *n, *d).flipped()),
        (Prim::Rect { pose, h }, Prim::HalfPlane { n, d }) => Ok(rect_halfplane(pose, *h, *n, *d)),
        (Prim::HalfPlane { n, d }, Prim::Rect { pose, h }) => Ok(rect_halfplane(pose, *h, *n, *d).flipped()),
        (Prim::Rect { pose: pa, h: ha }, Prim::Rect { pose: pb, h: hb }) => Ok(rect_rect(pa, *ha, pb, *hb)),
        (Prim::HalfPlane { .. }, Prim::HalfPlane { .. }) => {
            Err(Error::UnsupportedPair("half-plane vs half-plane".into()))
        }
    }
}

fn prim_point_distance(p: &Prim, x: [f64; 2]) -> f64 {
    match p {
        Prim::Circle { c, r } => norm2(sub(x, *c)) - r,
        Prim::Rect { pose, h } => {
            let l = pose.inverse_apply(x);
            let dx = l[0].abs() - h[0];
            let dy = l[1].abs() - h[1];
            if dx <= 0.0 && dy <= 0.0 {
                dx.max(dy)
            } else {
                (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
            }
        }
        Prim::HalfPlane { n, d } => dot(*n, x) - d,
    }
}

fn circle_circle(ca: [f64; 2], ra: f64, cb: [f64; 2], rb: f64) -> Proximity {
    let d = sub(ca, cb);
    let dist = norm2(d);
    let n = if dist < 1e-12 { [1.0, 0.0] } else { [d[0] / dist, d[1] / dist] };
    Proximity {
        phi: dist - ra - rb,
        witness_a: [ca[0] - ra * n[0], ca[1] - ra * n[1]],
        witness_b: [cb[0] + rb * n[0], cb[1] + rb * n[1]],
        normal: n,
    }
}

/// Circle as A, rectangle as B.
fn circle_rect(c: [f64; 2], r: f64, pose: &Pose2, h: [f64; 2]) -> Proximity {
    let p = pose.inverse_apply(c);
    let inside = p[0].abs() <= h[0] && p[1].abs() <= h[1];
    let (closest, n_local, dist) = if !inside {
        let q = [p[0].clamp(-h[0], h[0]), p[1].clamp(-h[1], h[1])];
        let d = sub(p, q);
        let dist = norm2(d);
        (q, [d[0] / dist, d[1] / dist], dist)
    } else {
        let gx = h[0] - p[0].abs();
        let gy = h[1] - p[1].abs();
        if gx <= gy {
            let s = if p[0] >= 0.0 { 1.0 } else { -1.0 };
            ([s * h[0], p[1]], [s, 0.0], -gx)
        } else {
            let s = if p[1] >= 0.0 { 1.0 } else { -1.0 };
            ([p[0], s * h[1]], [0.0, s], -gy)
        }
    };
    let n = pose.rotate(n_local);
    Proximity {
        phi: dist - r,
        witness_a: [c[0] - r * n[0], c[1] - r * n[1]],
        witness_b: pose.apply(closest),
        normal: n,
    }
}

fn circle_halfplane(c: [f64; 2], r: f64, n: [f64; 2], d: f64) -> Proximity {
    let s = dot(n, c) - d;
    Proximity {
        phi: s - r,
        witness_a: [c[0] - r * n[0], c[1] - r * n[1]],
        witness_b: [c[0] - s * n[0], c[1] - s * n[1]],
        normal: n,
    }
}

fn rect_corners(p: &Prim) -> [[f64; 2]; 4] {
    match p {
        Prim::Rect { pose, h } => [
            pose.apply([h[0], h[1]]),
            pose.apply([-h[0], h[1]]),
            pose.apply([-h[0], -h[1]]),
            pose.apply([h[0], -h[1]]),
        ],
        _ => unreachable!("corners requested for a non-rectangle"),
    }
}

fn rect_halfplane(pose: &Pose2, h: [f64; 2], n: [f64; 2], d: f64) -> Proximity {
    let corners = rect_corners(&Prim::Rect { pose: *pose, h });
    let mut best = 0;
    let mut best_s = f64::INFINITY;
    for (k, c) in corners.iter().enumerate() {
        let s = dot(n, *c) - d;
        if s < best_s {
            best_s = s;
            best = k;
        }
    }
    let pa = corners[best];
    Proximity {
        phi: best_s,
        witness_a: pa,
        witness_b: [pa[0] - best_s * n[0], pa[1] - best_s * n[1]],
        normal: n,
    }
}

/// Rectangle-rectangle distance: closest features when separated, minimum
/// SAT overlap with the single deepest point when penetrating.
fn rect_rect(pa: &Pose2, ha: [f64; 2], pb: &Pose2, hb: [f64; 2]) -> Proximity {
    let ca = rect_corners(&Prim::Rect { pose: *pa, h: ha });
    let cb = rect_corners(&Prim::Rect { pose: *pb, h: hb });
    let axes = [pa.rotate([1.0, 0.0]), pa.rotate([0.0, 1.0]), pb.rotate([1.0, 0.0]), pb.rotate([0.0, 1.0])];
    let mut separated = false;
    let mut min_overlap = f64::INFINITY;
    let mut min_axis = [1.0, 0.0];
    for ax in axes {
        let (amin, amax) = project(&ca, ax);
        let (bmin, bmax) = project(&cb, ax);
        let overlap = (amax.min(bmax)) - (amin.max(bmin));
        if overlap <= 0.0 {
            separated = true;
            break;
        }
        if overlap < min_overlap {
            min_overlap = overlap;
            // orient from B toward A
            let dir = dot(sub([pa.x, pa.y], [pb.x, pb.y]), ax);
            min_axis = if dir >= 0.0 { ax } else { [-ax[0], -ax[1]] };
        }
    }
    if separated {
        let mut best: Option<(f64, [f64; 2], [f64; 2])> = None;
        let mut consider = |d: f64, wa: [f64; 2], wb: [f64; 2]| {
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, wa, wb));
            }
        };
        for v in ca {
            for k in 0..4 {
                let q = closest_on_segment(v, cb[k], cb[(k + 1) % 4]);
                consider(norm2(sub(v, q)), v, q);
            }
        }
        for v in cb {
            for k in 0..4 {
                let q = closest_on_segment(v, ca[k], ca[(k + 1) % 4]);
                consider(norm2(sub(v, q)), q, v);
            }
        }
        let (d, wa, wb) = best.expect("rectangles have corners");
        let diff = sub(wa, wb);
        let n = if d < 1e-14 { min_axis } else { [diff[0] / d, diff[1] / d] };
        return Proximity { phi: d, witness_a: wa, witness_b: wb, normal: n };
    }
    let n = min_axis;
    // deepest point of A along -n
    let mut wa = ca[0];
    let mut lowest = f64::INFINITY;
    for v in ca {
        let s = dot(v, n);
        if s < lowest {
            lowest = s;
            wa = v;
        }
    }
    let phi = -min_overlap;
    Proximity { phi, witness_a: wa, witness_b: [wa[0] - phi * n[0], wa[1] - phi * n[1]], normal: n }
}

fn project(corners: &[[f64; 2]; 4], ax: [f64; 2]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        let s = dot(*c, ax);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm2(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64) -> Pose2 {
        Pose2::new(x, y, 0.0)
    }

    #[test]
    fn pusher_bodies_touch() {
        let p = signed_distance(&CollisionGeometry::circle(0.1), &at(0.0, 0.0), &CollisionGeometry::rect(0.1, 0.1), &at(0.2, 0.0))
            .unwrap();
        assert!(p.phi.abs() < 1e-12);
        assert!((p.normal[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_circles_tie_break() {
        let c = CollisionGeometry::circle(0.1);
        let p = signed_distance(&c, &at(0.0, 0.0), &c, &at(0.0, 0.0)).unwrap();
        assert!((p.phi + 0.2).abs() < 1e-12);
        assert_eq!(p.normal, [1.0, 0.0]);
    }

    #[test]
    fn circle_above_half_plane() {
        let hp = CollisionGeometry::HalfPlane { normal: [0.0, 1.0], offset: 0.0 };
        let p = signed_distance(&CollisionGeometry::circle(0.05), &at(0.0, 0.08), &hp, &Pose2::default()).unwrap();
        assert!((p.phi - 0.03).abs() < 1e-12);
    }

    #[test]
    fn witness_points_realize_phi() {
        let a = CollisionGeometry::rect(0.1, 0.05);
        let b = CollisionGeometry::rect(0.07, 0.02);
        for (x, y, th) in [(0.3, 0.1, 0.4), (0.05, 0.02, 0.3), (-0.2, 0.3, 1.2)] {
            let p = signed_distance(&a, &Pose2::new(x, y, th), &b, &Pose2::default()).unwrap();
            let d = sub(p.witness_a, p.witness_b);
            assert!((dot(d, p.normal) - p.phi).abs() < 1e-9);
        }
    }

    #[test]
    fn rect_rect_separated_distance() {
        let a = CollisionGeometry::rect(0.1, 0.1);
        let p = signed_distance(&a, &at(0.5, 0.0), &a, &at(0.0, 0.0)).unwrap();
        assert!((p.phi - 0.3).abs() < 1e-12);
        let q = signed_distance(&a, &at(0.15, 0.0), &a, &at(0.0, 0.0)).unwrap();
        assert!((q.phi + 0.05).abs() < 1e-12);
        assert!((q.normal[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn union_takes_closest_member() {
        let t = CollisionGeometry::Union {
            members: vec![
                RectMember { half_extents: [0.1, 0.025], offset: [0.0, 0.0375], angle: 0.0 },
                RectMember { half_extents: [0.025, 0.075], offset: [0.0, -0.0625], angle: 0.0 },
            ],
        };
        let p = signed_distance(&CollisionGeometry::circle(0.01), &at(0.0, -0.2), &t, &Pose2::default()).unwrap();
        assert!((p.phi - (0.2 - 0.1375 - 0.01)).abs() < 1e-12);
        assert!(t.contains_point(&Pose2::default(), [0.0, 0.0]));
        assert!(!t.contains_point(&Pose2::default(), [0.08, -0.1]));
    }
}
