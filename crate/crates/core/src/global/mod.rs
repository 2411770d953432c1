//! Contact-configuration synthesis and roadmap planning.

pub mod connect;
pub mod grasp;
pub mod ik;
pub mod roadmap;

pub use grasp::{
    feasibility, robustness_radius, rollout_cost, sample_grasps, value_function, Feasibility, GraspCandidate,
    RobustnessSpec, Value,
};
pub use ik::{ik_project, tip_bodies, IkOptions, IkResult};
pub use connect::{collision_free_connect, lift_off, path_clearance, ConnectOptions, ConnectResult};
pub use roadmap::{build_roadmap, query_roadmap, random_walk, replay_edge, rotate_configuration, Edge, EdgeTolerance, Roadmap, RoadmapParams};
