//! Planar kinematics, signed distances, contact frames and contact Jacobians.

mod body;
mod contact;
mod model;
mod shapes;

pub use body::{Body, BodyKind, Dof, Role};
pub use contact::{contact_for_pair, contacts_for_pairs, detect_contacts, min_distance, ContactKinematics};
pub use model::{FrictionPair, PairSpec, SystemModel};
pub use shapes::{signed_distance, CollisionGeometry, Pose2, Proximity, RectMember};
