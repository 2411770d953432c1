//! Contact-rich planning toolkit: convex quasidynamic contact dynamics,
//! barrier-smoothed sensitivities, contact trust regions, SOCP-based MPC,
//! grasp synthesis and roadmap global planning for planar systems.

pub mod conic;
pub mod cqdc;
pub mod error;
pub mod geometry;
pub mod global;
pub mod io;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod sensitivity;
pub mod softsim;
pub mod trust_region;

pub use error::{Error, Result};
pub use geometry::{Body, CollisionGeometry, ContactKinematics, Pose2, SystemModel};
pub use planner::{PlannerParams, PoseError};
pub use scenario::Scenario;
pub use sensitivity::{LinearizedDynamics, QMode};
pub use trust_region::{TrustRegionConstraints, TrustRegionSpec, Variant};
