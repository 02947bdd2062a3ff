//! Planar double-integrator motion of the UAV at flight altitude.

use crate::geometry::Point2;

use super::vrptw::UavState;

/// Steers toward `target` (or brakes to a hover when `None`) with speed
/// capped at `v_cap` and acceleration capped at `a_max`. The speed command
/// is the largest that can still stop at the target.
pub fn step_uav(state: &UavState, target: Option<&Point2>, v_cap: f64, a_max: f64, dt: f64) -> UavState {
    let desired = match target {
        Some(t) => {
            let offset = t - state.position;
            let d = offset.norm();
            if d < 1e-9 {
                Point2::zeros()
            } else {
                offset / d * v_cap.min((2.0 * a_max * d).sqrt()).min(d / dt)
            }
        }
        None => Point2::zeros(),
    };
    let mut accel = (desired - state.velocity) / dt;
    let norm = accel.norm();
    if norm > a_max {
        accel *= a_max / norm;
    }
    let velocity = state.velocity + accel * dt;
    UavState { position: state.position + (state.velocity + velocity) * 0.5 * dt, velocity }
}
