//! UGV-side navigation: optimistic planning, velocity profiling, uncertainty
//! propagation along the plan and pessimistic collision prediction.

mod collision;
mod navigator;
mod planner;
mod profile;

use thiserror::Error;

pub use collision::{
    ellipse_cells, first_collision, predict_collision, propagate_uncertainty, select_support_point, sigma_ellipse, wait_guard,
    CollisionInfo, MotionMode, PropagatedBelief, SigmaEllipse,
};
pub use navigator::{NavConfig, NavOutput, NavStatus, UgvNavigator};
pub use planner::{nearest_passable, path_cost, plan_path, segment_clear, smooth_path, Walled};
pub use profile::{profile_trajectory, MotionLimits, PlannedTrajectory, Waypoint};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum NavError {
    #[error("start cell is not traversable")]
    StartBlocked,
    #[error("goal is unreachable in the planning map")]
    Unreachable,
    #[error("belief has not been initialized")]
    Uninitialized,
    #[error("covariance is not positive semi-definite")]
    NotPositiveSemidefinite,
}
