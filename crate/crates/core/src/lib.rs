//! Core algorithms for a single perceptive UAV guiding a fleet of blind UGVs.
//!
//! The UGVs carry only wheel odometry and a relative-pose receiver. They fuse
//! odometry with UAV-relayed pose measurements in an EKF ([`estimation`]),
//! receive region-limited occupancy patches from the UAV ([`mapsync`]), plan in
//! an optimistic view of their map and predict collisions in a pessimistic one
//! by propagating pose covariance along the plan ([`ugv_nav`]). The UAV turns
//! the resulting collision requests into a routing problem with deadline
//! windows and flies the solved visit order ([`uav_sched`]).
//!
//! Everything here is deterministic: all randomness flows through named
//! [`rng::RngStream`]s.

pub mod estimation;
pub mod geometry;
pub mod mapsync;
pub mod rng;
pub mod sensors;
pub mod uav_sched;
pub mod ugv_nav;
pub mod world;

pub use geometry::{wrap_angle, Point2, Pose2};
