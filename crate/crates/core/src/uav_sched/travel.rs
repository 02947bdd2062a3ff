//! Travel-time costs for the UAV.

use crate::geometry::Point2;

/// Straight-line time at cruise speed.
pub fn travel_time_between(p1: &Point2, p2: &Point2, v_max: f64) -> f64 {
    (p1 - p2).norm() / v_max
}

/// Time from the UAV's current state to `p_ps`, accounting for the speed it
/// already carries toward the target. `v_tan` is the velocity component along
/// the direction from the UAV to the target; the leg is covered by
/// accelerating at `a_max` up to `v_max` and cruising from there.
pub fn travel_time_from_start(p_a: &Point2, v_a: &Point2, p_ps: &Point2, v_max: f64, a_max: f64) -> f64 {
    let offset = p_ps - p_a;
    let d = offset.norm();
    if d == 0.0 {
        return 0.0;
    }
    let v_tan = (offset / d).dot(v_a);
    let dis_a = (v_max * v_max - v_tan * v_tan) / (2.0 * a_max);
    let t = if dis_a > d {
        ((v_tan * v_tan + 2.0 * a_max * d).sqrt() - v_tan) / a_max
    } else {
        (v_max - v_tan) / a_max + (d - dis_a) / v_max
    };
    t.max(0.0)
}
