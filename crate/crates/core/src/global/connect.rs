//! Collision-free robot motion with the object held static.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{contacts_for_pairs, min_distance, Role, SystemModel};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectOptions {
    /// Spacing of collision checks along a segment.
    pub resolution: f64,
    pub max_iterations: usize,
    pub goal_bias: f64,
    /// RRT extension length.
    pub step: f64,
    /// Gap kept between robot and object away from the endpoints.
    pub clearance: f64,
    /// Largest change of a position command between consecutive waypoints.
    pub command_step: f64,
    pub seed: u64,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        ConnectOptions {
            resolution: 1e-3,
            max_iterations: 10_000,
            goal_bias: 0.1,
            step: 0.1,
            clearance: 5e-3,
            command_step: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectResult {
    /// Robot waypoints from q_from to q_to, spaced by at most `command_step`.
    pub path: Vec<DVector<f64>>,
    /// The straight segment between the lifted endpoints was blocked.
    pub used_rrt: bool,
    pub rrt_iterations: usize,
}

fn robot_object_pairs(sys: &SystemModel) -> Vec<usize> {
    let pairs = sys.pairs();
    (0..pairs.len())
        .filter(|&i| {
            sys.bodies[pairs[i].a].role == Role::Robot || sys.bodies[pairs[i].b].role == Role::Robot
        })
        .collect()
}

/// Smallest gap between the robot and everything else at (qo, qa).
fn robot_gap(sys: &SystemModel, pairs: &[usize], q: &DVector<f64>) -> f64 {
    contacts_for_pairs(sys, q, pairs).iter().map(|c| c.phi).fold(f64::INFINITY, f64::min)
}

/// Moves the robot off the object by `clearance` along the contact normals
/// (least-norm step); pairs already farther than `clearance` are ignored.
pub fn lift_off(sys: &SystemModel, q: &DVector<f64>, clearance: f64) -> DVector<f64> {
    let pairs = robot_object_pairs(sys);
    let mut q = q.clone();
    for _ in 0..20 {
        let near: Vec<_> = contacts_for_pairs(sys, &q, &pairs).into_iter().filter(|c| c.phi < clearance * (1.0 - 1e-6)).collect();
        if near.is_empty() {
            break;
        }
        let jn = DMatrix::from_fn(near.len(), sys.n_qa(), |r, c| near[r].jac_robot(sys)[(0, c)]);
        let need = DVector::from_fn(near.len(), |r, _| clearance - near[r].phi);
        let gram = &jn * jn.transpose() + DMatrix::identity(near.len(), near.len()) * 1e-12;
        let Some(w) = gram.lu().solve(&need) else { break };
        let qa = sys.robot_part(&q) + jn.transpose() * w;
        q = sys.with_robot(&q, &qa);
    }
    q
}

fn segment_free(sys: &SystemModel, pairs: &[usize], q: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, opts: &ConnectOptions, margin: f64) -> bool {
    let n = ((b - a).norm() / opts.resolution).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let qa = a + (b - a) * (k as f64 / n as f64);
        robot_gap(sys, pairs, &sys.with_robot(q, &qa)) >= margin
    })
}

fn within_limits(lo: &DVector<f64>, hi: &DVector<f64>, qa: &DVector<f64>) -> bool {
    (0..qa.len()).all(|k| qa[k] >= lo[k] - 1e-12 && qa[k] <= hi[k] + 1e-12)
}

fn densify(points: &[DVector<f64>], step: f64) -> Vec<DVector<f64>> {
    let mut out = vec![points[0].clone()];
    for w in points.windows(2) {
        let n = ((&w[1] - &w[0]).amax() / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(&w[0] + (&w[1] - &w[0]) * (k as f64 / n as f64));
        }
    }
    out
}

/// Robot path from `q_from` to `q_to` (same object pose, taken from `q_from`).
///
/// Both endpoints are lifted off the object first; the lifted points are joined
/// by a straight segment if it keeps the clearance, otherwise by a goal-biased
/// bidirectional RRT in robot joint space.
pub fn collision_free_connect(sys: &SystemModel, q_from: &DVector<f64>, q_to: &DVector<f64>, opts: &ConnectOptions) -> Result<ConnectResult> {
    let pairs = robot_object_pairs(sys);
    let q_to = sys.with_robot(q_from, &sys.robot_part(q_to));
    for q in [q_from, &q_to] {
        if min_distance(sys, q) < -1e-6 {
            return Err(Error::PlanningFailure("endpoint in collision".into()));
        }
    }
    let (a0, b0) = (sys.robot_part(q_from), sys.robot_part(&q_to));
    if (&b0 - &a0).amax() == 0.0 {
        return Ok(ConnectResult { path: vec![a0], used_rrt: false, rrt_iterations: 0 });
    }
    let (a1, b1) = (sys.robot_part(&lift_off(sys, q_from, opts.clearance)), sys.robot_part(&lift_off(sys, &q_to, opts.clearance)));
    let margin = 0.5 * opts.clearance;
    // the short lift segments only need to stay out of penetration
    for (p, r) in [(&a0, &a1), (&b0, &b1)] {
        if !segment_free(sys, &pairs, q_from, p, r, opts, -1e-6) {
            return Err(Error::PlanningFailure("cannot lift off the object".into()));
        }
    }
    let (lo, hi) = sys.robot_limits();
    if !within_limits(&lo, &hi, &a1) || !within_limits(&lo, &hi, &b1) {
        return Err(Error::PlanningFailure("lifted endpoint outside joint limits".into()));
    }
    let finish = |mid: Vec<DVector<f64>>, used_rrt, iters| {
        let mut pts = vec![a0.clone()];
        pts.extend(mid);
        pts.push(b0.clone());
        ConnectResult { path: densify(&pts, opts.command_step), used_rrt, rrt_iterations: iters }
    };
    if segment_free(sys, &pairs, q_from, &a1, &b1, opts, margin) {
        return Ok(finish(vec![a1, b1], false, 0));
    }
    // sampling box: joint limits, or the endpoints grown by the detection threshold when unbounded
    let grow = sys.phi_threshold() + 0.1;
    let lo_s = DVector::from_fn(lo.len(), |k, _| if lo[k].is_finite() { lo[k] } else { a1[k].min(b1[k]) - grow });
    let hi_s = DVector::from_fn(hi.len(), |k, _| if hi[k].is_finite() { hi[k] } else { a1[k].max(b1[k]) + grow });
    let mut rng = rng::stream(opts.seed, 0);
    let mut trees = [Tree::new(a1.clone()), Tree::new(b1.clone())];
    let free = |a: &DVector<f64>, b: &DVector<f64>| segment_free(sys, &pairs, q_from, a, b, opts, margin);
    for it in 1..=opts.max_iterations {
        // alternate which tree grows; the other one greedily tries to meet it
        let (grow_i, meet_i) = if it % 2 == 1 { (0, 1) } else { (1, 0) };
        let target = if rng.random::<f64>() < opts.goal_bias {
            trees[meet_i].nodes[0].clone()
        } else {
            DVector::from_fn(lo_s.len(), |k, _| rng.random_range(lo_s[k]..=hi_s[k]))
        };
        let Some(new) = trees[grow_i].extend(&target, opts.step, &free) else { continue };
        let mut reached = false;
        while let Some(n) = trees[meet_i].extend(&new, opts.step, &free) {
            if (&n - &new).norm() < 1e-12 {
                reached = true;
                break;
            }
        }
        if reached {
            // both trees now end at the meeting node
            let mut from_a = trees[0].chain_to_root(trees[0].nodes.len() - 1);
            from_a.reverse();
            let from_b = trees[1].chain_to_root(trees[1].nodes.len() - 1);
            from_a.extend(from_b.into_iter().skip(1));
            return Ok(finish(from_a, true, it));
        }
    }
    Err(Error::PlanningFailure(format!("RRT found no path in {} iterations", opts.max_iterations)))
}

struct Tree {
    nodes: Vec<DVector<f64>>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: DVector<f64>) -> Self {
        Tree { nodes: vec![root], parent: vec![usize::MAX] }
    }

    /// One step of at most `step` from the nearest node toward `target`.
    fn extend(&mut self, target: &DVector<f64>, step: f64, free: &impl Fn(&DVector<f64>, &DVector<f64>) -> bool) -> Option<DVector<f64>> {
        let (near, len) = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, (n - target).norm()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        if len == 0.0 {
            return None;
        }
        let new = if len <= step { target.clone() } else { &self.nodes[near] + (target - &self.nodes[near]) * (step / len) };
        if !free(&self.nodes[near], &new) {
            return None;
        }
        self.nodes.push(new.clone());
        self.parent.push(near);
        Some(new)
    }

    /// Nodes from `k` back to the root.
    fn chain_to_root(&self, mut k: usize) -> Vec<DVector<f64>> {
        let mut out = vec![];
        while k != usize::MAX {
            out.push(self.nodes[k].clone());
            k = self.parent[k];
        }
        out
    }
}

/// Minimum gap along a robot path at the object pose of `q`, densely checked.
pub fn path_clearance(sys: &SystemModel, q: &DVector<f64>, path: &[DVector<f64>], resolution: f64) -> f64 {
    let pairs = robot_object_pairs(sys);
    let mut worst = f64::INFINITY;
    for w in path.windows(2) {
        let n = ((&w[1] - &w[0]).norm() / resolution).ceil().max(1.0) as usize;
        for k in 0..=n {
            let qa = &w[0] + (&w[1] - &w[0]) * (k as f64 / n as f64);
            worst = worst.min(robot_gap(sys, &pairs, &sys.with_robot(q, &qa)));
        }
    }
    if path.len() == 1 {
        worst = robot_gap(sys, &pairs, &sys.with_robot(q, &path[0]));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::systems::{palmsquare, palmsquare_grasps, planarhand};

    #[test]
    fn identical_endpoints_give_one_point() {
        let sys = palmsquare();
        let q = DVector::from_vec(palmsquare_grasps()[0].clone());
        let r = collision_free_connect(&sys, &q, &q, &ConnectOptions::default()).unwrap();
        assert_eq!(r.path.len(), 1);
    }

    #[test]
    fn regrasp_around_square_needs_rrt() {
        let sys = palmsquare();
        let from = DVector::from_vec(palmsquare_grasps()[0].clone());
        // swap the fingers to the opposite faces
        let to = DVector::from_row_slice(&[0.0, 0.0, 0.0, from[5], from[6], from[3], from[4]]);
        let r = collision_free_connect(&sys, &from, &to, &ConnectOptions::default()).unwrap();
        assert!(r.used_rrt);
        assert!(path_clearance(&sys, &from, &r.path, 1e-4) >= -1e-6);
        assert_eq!(r.path.first().unwrap(), &sys.robot_part(&from));
        assert_eq!(r.path.last().unwrap(), &sys.robot_part(&to));
    }

    #[test]
    fn planarhand_finger_regrasp() {
        let sys = planarhand();
        let from = DVector::from_vec(crate::scenario::systems::planarhand_antipodal());
        let to = DVector::from_vec(crate::scenario::systems::planarhand_single_sided());
        let r = collision_free_connect(&sys, &from, &to, &ConnectOptions::default()).unwrap();
        assert!(path_clearance(&sys, &from, &r.path, 1e-4) >= -1e-6);
    }
}
