//! Roadmaps of contact configurations joined by stored local plans.

use nalgebra::DVector;
use petgraph::algo::{astar, kosaraju_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::{Bfs, EdgeRef};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::connect::{collision_free_connect, ConnectOptions};
use super::ik::{ik_project, tip_bodies, IkOptions};
use crate::cqdc::rollout_nonsmooth;
use crate::error::{Error, Result};
use crate::geometry::{BodyKind, CollisionGeometry, Dof, Role, SystemModel};
use crate::planner::{mpc_rollout, pose_error, rotation_indices, wrap_angle, PlannerParams, PoseError};
use crate::rng;

pub const ROADMAP_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeTolerance {
    pub object: PoseError,
    /// Max-norm tolerance on the robot configuration.
    pub robot: f64,
}

impl Default for EdgeTolerance {
    fn default() -> Self {
        EdgeTolerance { object: PoseError { translation: 5e-3, rotation: 20e-3 }, robot: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapParams {
    pub planner: PlannerParams,
    pub tolerance: EdgeTolerance,
    pub connect: ConnectOptions,
    /// World rotations about the origin under which the scenario is invariant.
    pub symmetries: Vec<f64>,
    /// Pairs whose object rotation differs by more than this (wrapped) are not
    /// attempted; a half-turn goal leaves MPC no preferred direction.
    #[serde(default)]
    pub max_rotation: Option<f64>,
    pub seed: u64,
}

impl RoadmapParams {
    pub fn for_scenario(s: &crate::scenario::Scenario) -> Self {
        RoadmapParams {
            planner: s.params.clone(),
            tolerance: EdgeTolerance::default(),
            connect: ConnectOptions::default(),
            symmetries: s.symmetries.clone(),
            max_rotation: s.max_edge_rotation,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// Position commands u₀..u_{M−1}: the MPC segment, then the collision-free one.
    pub inputs: Vec<DVector<f64>>,
    /// Non-smooth rollout q₀..q_M of `inputs` from the source vertex.
    pub states: Vec<DVector<f64>>,
    /// Length of the MPC segment within `inputs`.
    pub mpc_steps: usize,
    /// Σ‖q_{t+1} − q_t‖ along `states`.
    pub length: f64,
    /// Symmetry (index into the symmetry list) this edge was mapped by; 0 for directly planned edges.
    pub symmetry: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub scenario: String,
    pub seed: u64,
    pub base_vertices: usize,
    pub attempted_pairs: usize,
    pub params: RoadmapParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roadmap {
    pub version: u32,
    pub vertices: Vec<DVector<f64>>,
    pub edges: Vec<Edge>,
    pub metadata: BuildMetadata,
}

/// World rotation by `angle` about the origin applied to every body.
///
/// Fails for chains and for translational DOFs fixed away from the origin,
/// whose images are not configurations of the same system.
pub fn rotate_configuration(sys: &SystemModel, q: &DVector<f64>, angle: f64) -> Result<DVector<f64>> {
    let (s, c) = angle.sin_cos();
    let mut out = q.clone();
    for b in sys.bodies.iter().filter(|b| b.role != Role::Static) {
        match &b.kind {
            BodyKind::Free { x, y, theta } => {
                match (x, y) {
                    (Dof::Index(ix), Dof::Index(iy)) => {
                        out[*ix] = c * q[*ix] - s * q[*iy];
                        out[*iy] = s * q[*ix] + c * q[*iy];
                    }
                    (Dof::Fixed(a), Dof::Fixed(b)) if *a == 0.0 && *b == 0.0 => {}
                    _ => return Err(Error::InvalidModel(format!("body '{}' has no planar rotation image", b.name))),
                }
                match theta {
                    Dof::Index(i) => out[*i] = q[*i] + angle,
                    Dof::Fixed(_) if matches!(b.geometry, CollisionGeometry::Circle { offset, .. } if offset == [0.0, 0.0]) => {}
                    Dof::Fixed(_) => return Err(Error::InvalidModel(format!("body '{}' cannot rotate", b.name))),
                }
            }
            BodyKind::Chain { .. } => return Err(Error::InvalidModel("chains have no planar rotation image".into())),
        }
    }
    Ok(out)
}

/// Object-pose distance with the MPC Q weights (wrapped on rotation rows).
pub fn object_distance(sys: &SystemModel, weights: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let rot = rotation_indices(sys);
    sys.object_indices
        .iter()
        .map(|&i| {
            let d = if rot.contains(&i) { wrap_angle(a[i] - b[i]) } else { a[i] - b[i] };
            weights[i] * d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn same_configuration(sys: &SystemModel, a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let rot = rotation_indices(sys);
    (0..a.len()).all(|i| {
        let d = if rot.contains(&i) { wrap_angle(a[i] - b[i]) } else { a[i] - b[i] };
        d.abs() < 1e-9
    })
}

pub fn reaches(sys: &SystemModel, q: &DVector<f64>, target: &DVector<f64>, tol: &EdgeTolerance) -> bool {
    let e = pose_error(sys, q, target);
    e.translation <= tol.object.translation
        && e.rotation <= tol.object.rotation
        && (sys.robot_part(q) - sys.robot_part(target)).amax() <= tol.robot
}

fn path_length(states: &[DVector<f64>]) -> f64 {
    states.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
}

#[derive(Clone, Debug)]
pub struct Connection {
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub mpc_steps: usize,
}

/// MPC from `q_from` to the object pose of `q_to`, then a collision-free move
/// to the robot configuration of `q_to`; states are the non-smooth rollout.
///
/// With `robot_too = false` only the MPC segment is run.
pub fn connect(sys: &SystemModel, q_from: &DVector<f64>, q_to: &DVector<f64>, robot_too: bool, params: &RoadmapParams, task: u64) -> Result<Connection> {
    let tol = &params.tolerance.object;
    let e0 = pose_error(sys, q_from, q_to);
    // an object already at its goal pose needs no MPC segment
    let (mut inputs, q_h) = if e0.translation <= tol.translation && e0.rotation <= tol.rotation {
        (vec![], q_from.clone())
    } else {
        let log = mpc_rollout(sys, q_from, q_to, &params.planner, false)?;
        if let Some(t) = log.infeasible_at {
            return Err(Error::PlanningFailure(format!("MPC infeasible at step {t}")));
        }
        let q_h = log.final_q().clone();
        let e = pose_error(sys, &q_h, q_to);
        if e.translation > tol.translation || e.rotation > tol.rotation {
            return Err(Error::PlanningFailure(format!(
                "MPC ended {:.2e} m / {:.2e} rad from the object goal",
                e.translation, e.rotation
            )));
        }
        (log.us, q_h)
    };
    let mpc_steps = inputs.len();
    if robot_too {
        let opts = ConnectOptions { seed: params.connect.seed ^ task, ..params.connect };
        let goal = retarget_grasp(sys, q_to, &q_h)?;
        let cf = collision_free_connect(sys, &q_h, &goal, &opts)?;
        inputs.extend(cf.path);
    }
    let states = rollout_nonsmooth(sys, q_from, &inputs)?;
    Ok(Connection { inputs, states, mpc_steps })
}

/// The grasp of `q_to` carried rigidly onto the object pose of `q_actual`.
///
/// Robot frame origins keep their positions relative to the object; free
/// bodies take them directly, chains are solved with IK.
pub fn retarget_grasp(sys: &SystemModel, q_to: &DVector<f64>, q_actual: &DVector<f64>) -> Result<DVector<f64>> {
    let ob = sys
        .bodies
        .iter()
        .position(|b| b.role == Role::Object)
        .ok_or_else(|| Error::InvalidModel("no object body".into()))?;
    let from = sys.bodies[ob].pose(q_to.as_slice());
    let to = sys.bodies[ob].pose(q_actual.as_slice());
    let tips = tip_bodies(sys);
    let targets: Vec<[f64; 2]> = tips
        .iter()
        .map(|&b| {
            let p = sys.bodies[b].pose(q_to.as_slice());
            to.apply(from.inverse_apply([p.x, p.y]))
        })
        .collect();
    let mut q = sys.with_robot(q_actual, &sys.robot_part(q_to));
    let mut chains = false;
    for (&b, t) in tips.iter().zip(&targets) {
        match &sys.bodies[b].kind {
            BodyKind::Free { x: Dof::Index(ix), y: Dof::Index(iy), .. } => {
                q[*ix] = t[0];
                q[*iy] = t[1];
            }
            BodyKind::Free { .. } => {}
            BodyKind::Chain { .. } => chains = true,
        }
    }
    if chains {
        let r = ik_project(sys, &q, &targets, &IkOptions::default())?;
        q = sys.with_robot(&q, &r.qa);
    }
    Ok(q)
}

/// Vertices: every base grasp mapped by every symmetry (base copies first).
pub fn expand_vertices(sys: &SystemModel, grasps: &[DVector<f64>], symmetries: &[f64]) -> Result<Vec<DVector<f64>>> {
    let syms: Vec<f64> = if symmetries.is_empty() { vec![0.0] } else { symmetries.to_vec() };
    let mut out = vec![];
    for &a in &syms {
        for g in grasps {
            out.push(if a == 0.0 { g.clone() } else { rotate_configuration(sys, g, a)? });
        }
    }
    Ok(out)
}

/// Roadmap construction: edges are planned from every base vertex to every
/// other vertex, then copied under each symmetry.
///
/// Pairs whose MPC or collision-free segment fails, or whose rollout misses
/// the target by more than the edge tolerance, are omitted.
pub fn build_roadmap(sys: &SystemModel, scenario: &str, grasps: &[DVector<f64>], params: &RoadmapParams) -> Result<Roadmap> {
    if grasps.is_empty() {
        return Err(Error::InvalidModel("roadmap needs at least one grasp".into()));
    }
    let vertices = expand_vertices(sys, grasps, &params.symmetries)?;
    let nb = grasps.len();
    let pairs: Vec<(usize, usize)> = (0..nb)
        .flat_map(|i| (0..vertices.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter(|&(i, j)| params.max_rotation.is_none_or(|m| pose_error(sys, &vertices[i], &vertices[j]).rotation <= m))
        .collect();
    let planned: Vec<Option<Connection>> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let c = connect(sys, &vertices[i], &vertices[j], true, params, k as u64).ok()?;
            reaches(sys, c.states.last().expect("nonempty"), &vertices[j], &params.tolerance).then_some(c)
        })
        .collect();
    let syms: Vec<f64> = if params.symmetries.is_empty() { vec![0.0] } else { params.symmetries.clone() };
    let find = |q: &DVector<f64>| vertices.iter().position(|v| same_configuration(sys, v, q));
    let mut edges = vec![];
    for (s, &angle) in syms.iter().enumerate() {
        for (&(i, j), c) in pairs.iter().zip(&planned) {
            let Some(c) = c else { continue };
            let map = |q: &DVector<f64>| if angle == 0.0 { Ok(q.clone()) } else { rotate_configuration(sys, q, angle) };
            let (Some(src), Some(dst)) = (find(&map(&vertices[i])?), find(&map(&vertices[j])?)) else { continue };
            let inputs: Vec<DVector<f64>> = c
                .inputs
                .iter()
                .map(|u| {
                    let q = sys.with_robot(&vertices[i], u);
                    Ok(sys.robot_part(&map(&q)?))
                })
                .collect::<Result<_>>()?;
            let states = if s == 0 { c.states.clone() } else { rollout_nonsmooth(sys, &vertices[src], &inputs)? };
            if s != 0 && !reaches(sys, states.last().expect("nonempty"), &vertices[dst], &params.tolerance) {
                continue;
            }
            edges.push(Edge { source: src, target: dst, length: path_length(&states), inputs, states, mpc_steps: c.mpc_steps, symmetry: s });
        }
    }
    Ok(Roadmap {
        version: ROADMAP_VERSION,
        vertices,
        edges,
        metadata: BuildMetadata { scenario: scenario.into(), seed: params.seed, base_vertices: nb, attempted_pairs: pairs.len(), params: params.clone() },
    })
}

impl Roadmap {
    pub fn graph(&self) -> DiGraph<usize, f64> {
        let mut g = DiGraph::new();
        let nodes: Vec<NodeIndex> = (0..self.vertices.len()).map(|i| g.add_node(i)).collect();
        for e in &self.edges {
            g.add_edge(nodes[e.source], nodes[e.target], e.length);
        }
        g
    }

    pub fn strongly_connected(&self) -> bool {
        !self.vertices.is_empty() && kosaraju_scc(&self.graph()).len() == 1
    }

    /// Vertices reachable from `v`, sorted.
    pub fn reachable_from(&self, v: usize) -> Vec<usize> {
        let g = self.graph();
        let mut bfs = Bfs::new(&g, NodeIndex::new(v));
        let mut out = vec![];
        while let Some(n) = bfs.next(&g) {
            out.push(n.index());
        }
        out.sort_unstable();
        out
    }

    /// Cheapest edge chain from `s` to `t` as edge indices.
    pub fn shortest_path(&self, s: usize, t: usize) -> Option<(f64, Vec<usize>)> {
        let g = self.graph();
        let (cost, nodes) = astar(&g, NodeIndex::new(s), |n| n.index() == t, |e| *e.weight(), |_| 0.0)?;
        let mut edges = vec![];
        for w in nodes.windows(2) {
            let best = g
                .edges_connecting(w[0], w[1])
                .min_by(|a, b| a.weight().total_cmp(b.weight()).then(a.id().cmp(&b.id())))
                .expect("path edges exist");
            edges.push(best.id().index());
        }
        Some((cost, edges))
    }

    pub fn nearest_vertex(&self, sys: &SystemModel, weights: &[f64], q: &DVector<f64>) -> usize {
        (0..self.vertices.len())
            .map(|i| (i, object_distance(sys, weights, &self.vertices[i], q)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Roadmap = serde_json::from_str(text)?;
        if r.version != ROADMAP_VERSION {
            return Err(Error::InvalidModel(format!("roadmap version {} (expected {ROADMAP_VERSION})", r.version)));
        }
        Ok(r)
    }
}

/// Open-loop replay of an edge's inputs from `start`.
pub fn replay_edge(sys: &SystemModel, edge: &Edge, start: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    rollout_nonsmooth(sys, start, &edge.inputs)
}

#[derive(Clone, Debug)]
pub struct QueryResult {
    /// Edge indices of the stored chain.
    pub edges: Vec<usize>,
    pub start_vertex: usize,
    pub goal_vertex: usize,
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
}

/// Plan from `q0` to the object pose `goal` through the roadmap.
///
/// `q0` is joined to its nearest vertex with the edge recipe, the stored chain is
/// found by shortest path, and a final MPC segment runs from the goal-side vertex.
pub fn query_roadmap(sys: &SystemModel, roadmap: &Roadmap, q0: &DVector<f64>, goal: &DVector<f64>, params: &RoadmapParams) -> Result<QueryResult> {
    if roadmap.vertices.is_empty() {
        return Err(Error::InvalidModel("empty roadmap".into()));
    }
    let w = &params.planner.q_weights;
    let s = roadmap.nearest_vertex(sys, w, q0);
    let g = roadmap.nearest_vertex(sys, w, goal);
    let mut inputs = vec![];
    if !reaches(sys, q0, &roadmap.vertices[s], &EdgeTolerance { robot: 0.0, object: PoseError { translation: 0.0, rotation: 0.0 } }) {
        inputs.extend(connect(sys, q0, &roadmap.vertices[s], true, params, u64::MAX)?.inputs);
    }
    let (_, chain) = roadmap.shortest_path(s, g).ok_or_else(|| Error::Disconnected(roadmap.reachable_from(s)))?;
    for &e in &chain {
        inputs.extend(roadmap.edges[e].inputs.iter().cloned());
    }
    let at_goal_vertex = rollout_nonsmooth(sys, q0, &inputs)?.pop().expect("nonempty");
    let last = connect(sys, &at_goal_vertex, goal, false, params, u64::MAX - 1);
    if let Ok(c) = last {
        inputs.extend(c.inputs);
    } else if pose_error(sys, &at_goal_vertex, goal).combined() > params.tolerance.object.translation + params.tolerance.object.rotation {
        return Err(last.err().expect("checked"));
    }
    let states = rollout_nonsmooth(sys, q0, &inputs)?;
    Ok(QueryResult { edges: chain, start_vertex: s, goal_vertex: g, inputs, states })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub edge: usize,
    pub reached: bool,
}

/// Random walk over outgoing edges. Each traversal re-runs the edge recipe
/// (MPC to the target object pose, then the collision-free move) from the
/// state the previous traversal actually ended in.
pub fn random_walk(sys: &SystemModel, roadmap: &Roadmap, start: usize, steps: usize, params: &RoadmapParams, seed: u64) -> Result<(Vec<WalkStep>, DVector<f64>)> {
    let mut rng = rng::stream(seed, 0);
    let mut v = start;
    let mut q = roadmap.vertices[start].clone();
    let mut log = vec![];
    for k in 0..steps {
        let out: Vec<usize> = (0..roadmap.edges.len()).filter(|&e| roadmap.edges[e].source == v).collect();
        if out.is_empty() {
            return Err(Error::Disconnected(roadmap.reachable_from(v)));
        }
        let e = out[rng.random_range(0..out.len())];
        let target = &roadmap.vertices[roadmap.edges[e].target];
        let reached = match connect(sys, &q, target, true, params, k as u64) {
            Ok(c) => {
                q = c.states.last().expect("nonempty").clone();
                reaches(sys, &q, target, &params.tolerance)
            }
            Err(_) => false,
        };
        log.push(WalkStep { edge: e, reached });
        if !reached {
            break;
        }
        v = roadmap.edges[e].target;
    }
    Ok((log, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;
    use proptest::prelude::*;

    fn synthetic(n: usize, arcs: &[(usize, usize, f64)]) -> Roadmap {
        let params = RoadmapParams::for_scenario(&builtin("pusher1d").unwrap());
        Roadmap {
            version: ROADMAP_VERSION,
            vertices: vec![DVector::zeros(1); n],
            edges: arcs
                .iter()
                .map(|&(s, t, l)| Edge { source: s, target: t, inputs: vec![], states: vec![], mpc_steps: 0, length: l, symmetry: 0 })
                .collect(),
            metadata: BuildMetadata { scenario: "synthetic".into(), seed: 0, base_vertices: n, attempted_pairs: 0, params },
        }
    }

    /// Floyd–Warshall distances.
    fn all_pairs(n: usize, arcs: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(s, t, l) in arcs {
            d[s][t] = d[s][t].min(l);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        d
    }

    proptest! {
        #[test]
        fn shortest_path_matches_floyd_warshall(
            n in 1usize..12,
            raw in prop::collection::vec((0usize..12, 0usize..12, 0.01f64..5.0), 0..40),
        ) {
            let arcs: Vec<_> = raw.into_iter().map(|(s, t, l)| (s % n, t % n, l)).filter(|a| a.0 != a.1).collect();
            let rm = synthetic(n, &arcs);
            let d = all_pairs(n, &arcs);
            for s in 0..n {
                for t in 0..n {
                    match rm.shortest_path(s, t) {
                        None => prop_assert!(d[s][t].is_infinite()),
                        Some((cost, chain)) => {
                            prop_assert!((cost - d[s][t]).abs() <= 1e-12 * (1.0 + cost));
                            let sum: f64 = chain.iter().map(|&e| rm.edges[e].length).sum();
                            prop_assert!((sum - cost).abs() <= 1e-12 * (1.0 + cost));
                            let mut at = s;
                            for &e in &chain {
                                prop_assert_eq!(rm.edges[e].source, at);
                                at = rm.edges[e].target;
                            }
                            prop_assert_eq!(at, t);
                        }
                    }
                }
            }
        }

        #[test]
        fn rotation_composes(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let sys = crate::scenario::systems::palmsquare();
            let q = DVector::from_vec(crate::scenario::systems::palmsquare_grasps()[0].clone());
            let ab = rotate_configuration(&sys, &rotate_configuration(&sys, &q, a).unwrap(), b).unwrap();
            let direct = rotate_configuration(&sys, &q, a + b).unwrap();
            prop_assert!((ab - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn reachability_and_scc() {
        let rm = synthetic(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert!(!rm.strongly_connected());
        assert_eq!(rm.reachable_from(0), vec![0, 1, 2]);
        assert_eq!(rm.reachable_from(2), vec![2]);
        assert!(synthetic(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).strongly_connected());
    }

    #[test]
    fn single_grasp_without_symmetry_has_no_edges() {
        let s = builtin("palmsquare").unwrap();
        let params = RoadmapParams { symmetries: vec![], ..RoadmapParams::for_scenario(&s) };
        let rm = build_roadmap(&s.system, "palmsquare", &[s.q0()], &params).unwrap();
        assert_eq!(rm.vertices.len(), 1);
        assert!(rm.edges.is_empty());
        assert!(rm.strongly_connected());
    }

    #[test]
    fn chains_have_no_rotation_image() {
        let sys = crate::scenario::systems::planarhand();
        let q = DVector::from_vec(crate::scenario::systems::planarhand_antipodal());
        assert!(rotate_configuration(&sys, &q, 0.1).is_err());
    }

    #[test]
    fn json_version_is_checked() {
        let mut rm = synthetic(2, &[(0, 1, 0.5)]);
        let back = Roadmap::from_json(&rm.to_json().unwrap()).unwrap();
        assert_eq!(back, rm);
        rm.version += 1;
        assert!(Roadmap::from_json(&rm.to_json().unwrap()).is_err());
    }
}
