//! Convex hulls in 2D and 3D and the max-inscribed radius about the origin.

use nalgebra::{DVector, Vector3};

use crate::conic::chebyshev_radius;
use crate::error::{Error, Result};

/// Halfspaces aᵀz + b ≤ 0 of a hull, plus the inscribed radius about the origin.
#[derive(Clone, Debug)]
pub struct HullRadius {
    pub halfspaces: Vec<(DVector<f64>, f64)>,
    pub radius: f64,
    /// Flat or otherwise degenerate cloud; radius is 0.
    pub degenerate: bool,
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Triangle (i, j, k) with outward normal n and offset d (n·x ≤ d inside).
#[derive(Clone, Debug)]
struct Face {
    v: [usize; 3],
    n: Vector3<f64>,
    d: f64,
}

fn make_face(p: &[Vector3<f64>], v: [usize; 3], interior: &Vector3<f64>) -> Face {
    let mut v = v;
    let mut n = (p[v[1]] - p[v[0]]).cross(&(p[v[2]] - p[v[0]]));
    if n.dot(&(interior - p[v[0]])) > 0.0 {
        v.swap(1, 2);
        n = -n;
    }
    let n = n.normalize();
    Face { v, n, d: n.dot(&p[v[0]]) }
}

/// Incremental 3D hull as outward triangles; `None` when the cloud is flat.
pub fn hull_3d(points: &[[f64; 3]]) -> Option<Vec<(Vector3<f64>, f64)>> {
    let p: Vec<Vector3<f64>> = points.iter().map(|x| Vector3::new(x[0], x[1], x[2])).collect();
    if p.len() < 4 {
        return None;
    }
    let scale = p.iter().map(|x| x.amax()).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-10 * scale;

    // initial simplex from extreme points
    let i0 = (0..p.len()).min_by(|&a, &b| p[a].x.total_cmp(&p[b].x)).expect("nonempty");
    let i1 = (0..p.len()).max_by(|&a, &b| (p[a] - p[i0]).norm().total_cmp(&(p[b] - p[i0]).norm()))?;
    let axis = p[i1] - p[i0];
    if axis.norm() <= eps {
        return None;
    }
    let line_dist = |k: usize| axis.cross(&(p[k] - p[i0])).norm() / axis.norm();
    let i2 = (0..p.len()).max_by(|&a, &b| line_dist(a).total_cmp(&line_dist(b)))?;
    if line_dist(i2) <= eps {
        return None;
    }
    let plane_n = axis.cross(&(p[i2] - p[i0])).normalize();
    let plane_dist = |k: usize| plane_n.dot(&(p[k] - p[i0])).abs();
    let i3 = (0..p.len()).max_by(|&a, &b| plane_dist(a).total_cmp(&plane_dist(b)))?;
    if plane_dist(i3) <= eps {
        return None;
    }
    let interior = (p[i0] + p[i1] + p[i2] + p[i3]) / 4.0;
    let mut faces = vec![
        make_face(&p, [i0, i1, i2], &interior),
        make_face(&p, [i0, i1, i3], &interior),
        make_face(&p, [i0, i2, i3], &interior),
        make_face(&p, [i1, i2, i3], &interior),
    ];

    for k in 0..p.len() {
        if [i0, i1, i2, i3].contains(&k) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| f.n.dot(&p[k]) - f.d > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for e in 0..3 {
                edges.push((f.v[e], f.v[(e + 1) % 3]));
            }
        }
        let horizon: Vec<(usize, usize)> =
            edges.iter().copied().filter(|&(a, b)| !edges.contains(&(b, a))).collect();
        let mut next: Vec<Face> = faces.into_iter().zip(visible).filter(|(_, v)| !v).map(|(f, _)| f).collect();
        for (a, b) in horizon {
            next.push(make_face(&p, [a, b, k], &interior));
        }
        faces = next;
    }
    Some(faces.into_iter().map(|f| (f.n, f.d)).collect())
}

/// H-representation of conv(points) and its Chebyshev radius about the origin.
pub fn hull_and_radius(points: &[DVector<f64>], dim: usize) -> Result<HullRadius> {
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension(format!("hull points must have dimension {dim}")));
    }
    let degenerate = || HullRadius { halfspaces: vec![], radius: 0.0, degenerate: true };
    let halfspaces: Vec<(DVector<f64>, f64)> = match dim {
        2 => {
            let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            let h = hull_2d(&pts);
            let scale = pts.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max);
            let area: f64 = (0..h.len()).map(|i| cross2([0.0, 0.0], h[i], h[(i + 1) % h.len()])).sum::<f64>() / 2.0;
            if h.len() < 3 || area <= 1e-14 * scale * scale {
                return Ok(degenerate());
            }
            (0..h.len())
                .map(|i| {
                    let (a, b) = (h[i], h[(i + 1) % h.len()]);
                    let n = DVector::from_row_slice(&[b[1] - a[1], a[0] - b[0]]);
                    let n = &n / n.norm();
                    let off = -(n[0] * a[0] + n[1] * a[1]);
                    (n, off)
                })
                .collect()
        }
        3 => {
            let pts: Vec<[f64; 3]> = points.iter().map(|p| [p[0], p[1], p[2]]).collect();
            match hull_3d(&pts) {
                None => return Ok(degenerate()),
                Some(f) => f.into_iter().map(|(n, d)| (DVector::from_row_slice(n.as_slice()), -d)).collect(),
            }
        }
        _ => return Err(Error::Dimension(format!("hulls supported for dim 2 or 3, got {dim}"))),
    };
    let radius = chebyshev_radius(&halfspaces);
    Ok(HullRadius { halfspaces, radius, degenerate: false })
}
