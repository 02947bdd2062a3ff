//! Time parameterization of a polyline for a differential-drive UGV.
//!
//! The polyline is split into runs at corners sharper than the spin threshold.
//! Each run starts with an in-place spin toward its first vertex and follows a
//! trapezoidal speed profile that ends at rest; gentle corners inside a run
//! are taken while moving by steering toward a lookahead point. Waypoints are
//! the exact rollout of the emitted controls under the unicycle transition.

use serde::{Deserialize, Serialize};

use crate::estimation::transition;
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::sensors::ControlSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// In-place spin rate.
    pub spin_rate: f64,
    /// Heading rate cap while moving.
    pub turn_rate_max: f64,
    /// Corners sharper than this are taken at rest.
    pub spin_threshold: f64,
    pub lookahead: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            a_max: 1.0,
            spin_rate: 1.0,
            turn_rate_max: 1.5,
            spin_threshold: 30f64.to_radians(),
            lookahead: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point2,
    pub heading: f64,
    pub speed: f64,
    /// Seconds from the start of the trajectory.
    pub eta: f64,
}

impl Waypoint {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.position.x, self.position.y, self.heading)
    }
}

/// `controls[k]` carries `waypoints[k]` to `waypoints[k + 1]` over `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub waypoints: Vec<Waypoint>,
    pub controls: Vec<ControlSample>,
    pub dt: f64,
    pub total_length: f64,
}

impl PlannedTrajectory {
    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.eta)
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }
}

/// Trapezoidal (or triangular) speed profile from `v0` down to rest.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Trapezoid {
    v0: f64,
    vp: f64,
    a: f64,
    t1: f64,
    t2: f64,
    t3: f64,
    s1: f64,
    s2: f64,
    length: f64,
}

impl Trapezoid {
    pub(crate) fn new(length: f64, v0: f64, v_max: f64, a: f64) -> Self {
        let v0 = v0.clamp(0.0, v_max);
        let stop = v0 * v0 / (2.0 * a);
        if stop >= length {
            return Self { v0, vp: v0, a, t1: 0.0, t2: 0.0, t3: v0 / a, s1: 0.0, s2: 0.0, length: stop };
        }
        let vp = (a * length + v0 * v0 / 2.0).sqrt().min(v_max);
        let s1 = (vp * vp - v0 * v0) / (2.0 * a);
        let s3 = vp * vp / (2.0 * a);
        let s2 = (length - s1 - s3).max(0.0);
        Self { v0, vp, a, t1: (vp - v0) / a, t2: if vp > 0.0 { s2 / vp } else { 0.0 }, t3: vp / a, s1, s2, length }
    }

    pub(crate) fn duration(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }

    pub(crate) fn length(&self) -> f64 {
        self.length
    }

    pub(crate) fn position(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration());
        if t <= self.t1 {
            self.v0 * t + 0.5 * self.a * t * t
        } else if t <= self.t1 + self.t2 {
            self.s1 + self.vp * (t - self.t1)
        } else {
            let u = t - self.t1 - self.t2;
            (self.s1 + self.s2 + self.vp * u - 0.5 * self.a * u * u).min(self.length)
        }
    }

    pub(crate) fn speed(&self, t: f64) -> f64 {
        if t <= self.t1 {
            self.v0 + self.a * t.max(0.0)
        } else if t <= self.t1 + self.t2 {
            self.vp
        } else {
            (self.vp - self.a * (t - self.t1 - self.t2)).max(0.0)
        }
    }
}

/// Point at arc length `s` along `line`, clamped to its ends.
fn point_at(line: &[Point2], cumulative: &[f64], s: f64) -> Point2 {
    let s = s.clamp(0.0, *cumulative.last().unwrap());
    let k = cumulative.partition_point(|&c| c < s).clamp(1, line.len() - 1);
    let seg = cumulative[k] - cumulative[k - 1];
    if seg <= 0.0 {
        return line[k];
    }
    line[k - 1] + (line[k] - line[k - 1]) * ((s - cumulative[k - 1]) / seg)
}

struct Builder {
    pose: Pose2,
    speed: f64,
    t: f64,
    dt: f64,
    out: PlannedTrajectory,
}

impl Builder {
    fn push(&mut self, v: f64, omega: f64, speed_after: f64) {
        let u = ControlSample::new(v, 0.0, omega).at(self.t);
        self.pose = transition(&self.pose, &u, self.dt);
        self.t += self.dt;
        self.speed = speed_after;
        self.out.controls.push(u);
        self.out.total_length += v.abs() * self.dt;
        self.out.waypoints.push(Waypoint { position: self.pose.position(), heading: self.pose.theta, speed: speed_after, eta: self.t });
    }

    fn spin_to(&mut self, heading: f64, rate: f64) {
        let delta = wrap_angle(heading - self.pose.theta);
        if delta.abs() < 1e-9 {
            return;
        }
        let n = (delta.abs() / (rate * self.dt) - 1e-9).ceil().max(1.0) as usize;
        let omega = delta / (n as f64 * self.dt);
        for _ in 0..n {
            self.push(0.0, omega, 0.0);
        }
    }

    /// Drives the polyline `line` (whose first point is the current position)
    /// and comes to rest at its end.
    fn run(&mut self, line: &[Point2], limits: &MotionLimits, steer: bool) {
        let mut cumulative = vec![0.0];
        for w in line.windows(2) {
            cumulative.push(cumulative.last().unwrap() + (w[1] - w[0]).norm());
        }
        let profile = Trapezoid::new(*cumulative.last().unwrap(), self.speed, limits.v_max, limits.a_max);
        let n = (profile.duration() / self.dt - 1e-9).ceil().max(0.0) as usize;
        let mut s_prev = 0.0;
        for k in 1..=n {
            let tk = k as f64 * self.dt;
            let s = profile.position(tk);
            let v = (s - s_prev) / self.dt;
            s_prev = s;
            let next = self.pose.position() + Point2::new(self.pose.theta.cos(), self.pose.theta.sin()) * (v * self.dt);
            let mut omega = 0.0;
            if steer && s < profile.length() - 1e-9 {
                let target = point_at(line, &cumulative, s + limits.lookahead);
                let to = target - next;
                if to.norm() > 1e-3 {
                    let max = limits.turn_rate_max;
                    omega = (wrap_angle(to.y.atan2(to.x) - self.pose.theta) / self.dt).clamp(-max, max);
                }
            }
            let speed_after = if k == n { 0.0 } else { profile.speed(tk) };
            self.push(v, omega, speed_after);
        }
    }
}

fn heading_of(a: &Point2, b: &Point2) -> f64 {
    let d = b - a;
    d.y.atan2(d.x)
}

/// Profiles `points` starting from heading `start_heading` at forward speed
/// `start_speed`.
pub fn profile_trajectory(points: &[Point2], start_heading: f64, start_speed: f64, limits: &MotionLimits, dt: f64) -> PlannedTrajectory {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    let start = pts.first().copied().unwrap_or_else(Point2::zeros);
    let start_pose = Pose2::new(start.x, start.y, wrap_angle(start_heading));
    let mut b = Builder {
        pose: start_pose,
        speed: start_speed.clamp(0.0, limits.v_max),
        t: 0.0,
        dt,
        out: PlannedTrajectory {
            waypoints: vec![Waypoint { position: start, heading: start_pose.theta, speed: start_speed.clamp(0.0, limits.v_max), eta: 0.0 }],
            controls: Vec::new(),
            dt,
            total_length: 0.0,
        },
    };
    if pts.is_empty() {
        b.out.waypoints.clear();
        return b.out;
    }

    // Run boundaries: indices of vertices where the robot must be at rest.
    let mut stops = Vec::new();
    for i in 1..pts.len().saturating_sub(1) {
        let turn = wrap_angle(heading_of(&pts[i], &pts[i + 1]) - heading_of(&pts[i - 1], &pts[i]));
        if turn.abs() > limits.spin_threshold {
            stops.push(i);
        }
    }
    stops.push(pts.len() - 1);

    if pts.len() == 1 && b.speed > 0.0 {
        let ahead = b.pose.position() + Point2::new(b.pose.theta.cos(), b.pose.theta.sin()) * (b.speed * b.speed / (2.0 * limits.a_max));
        b.run(&[b.pose.position(), ahead], limits, false);
        return b.out;
    }

    let mut from = 0;
    for &stop in &stops {
        if stop == 0 {
            continue;
        }
        let aim = heading_of(&b.pose.position(), &pts[from + 1]);
        let misaligned = wrap_angle(aim - b.pose.theta).abs() > limits.spin_threshold;
        if misaligned && b.speed > 0.0 {
            let ahead = b.pose.position() + Point2::new(b.pose.theta.cos(), b.pose.theta.sin()) * (b.speed * b.speed / (2.0 * limits.a_max));
            b.run(&[b.pose.position(), ahead], limits, false);
        }
        if b.speed == 0.0 {
            let aim = heading_of(&b.pose.position(), &pts[from + 1]);
            b.spin_to(aim, limits.spin_rate);
        }
        let mut line = vec![b.pose.position()];
        line.extend_from_slice(&pts[from + 1..=stop]);
        b.run(&line, limits, true);
        from = stop;
    }
    b.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn limits() -> MotionLimits {
        MotionLimits::default()
    }

    #[test]
    fn ten_meter_straight_takes_twenty_and_a_half_seconds() {
        let traj = profile_trajectory(&[Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)], 0.0, 0.0, &limits(), 0.05);
        assert!((traj.duration() - 20.5).abs() < 1e-9);
        let end = traj.waypoints.last().unwrap();
        assert!((end.position - Point2::new(10.0, 0.0)).norm() < 1e-9);
        assert_eq!(end.speed, 0.0);
        assert!(traj.waypoints.iter().all(|w| w.speed <= 0.5 + 1e-12));
    }

    #[test]
    fn short_path_is_triangular() {
        let tr = Trapezoid::new(0.1, 0.0, 0.5, 1.0);
        assert!((tr.vp - 0.1f64.sqrt()).abs() < 1e-12);
        assert!((tr.duration() - 2.0 * 0.1f64.sqrt()).abs() < 1e-12);
        let traj = profile_trajectory(&[Point2::new(0.0, 0.0), Point2::new(0.1, 0.0)], 0.0, 0.0, &limits(), 0.05);
        assert!((traj.waypoints.last().unwrap().position.x - 0.1).abs() < 1e-12);
        let peak = traj.waypoints.iter().map(|w| w.speed).fold(0.0, f64::max);
        assert!(peak <= 0.3163);
    }

    #[test]
    fn zero_length_path_is_empty() {
        let traj = profile_trajectory(&[Point2::new(1.0, 1.0)], 0.0, 0.0, &limits(), 0.05);
        assert!(traj.is_empty());
        assert_eq!(traj.duration(), 0.0);
        assert_eq!(traj.waypoints.len(), 1);
    }

    #[test]
    fn sharp_corner_spins_in_place() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 2.0)];
        let traj = profile_trajectory(&pts, 0.0, 0.0, &limits(), 0.05);
        let spins = traj.controls.iter().filter(|u| u.v_x == 0.0 && u.omega != 0.0).count();
        assert!(spins > 0);
        let end = traj.waypoints.last().unwrap();
        assert!((end.position - Point2::new(2.0, 2.0)).norm() < 1e-6);
    }

    #[test]
    fn controls_reproduce_waypoints() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(3.0, 0.5), Point2::new(6.0, 0.4), Point2::new(6.5, 4.0)];
        let traj = profile_trajectory(&pts, 1.0, 0.0, &limits(), 0.05);
        let mut pose = traj.waypoints[0].pose();
        for (u, w) in traj.controls.iter().zip(&traj.waypoints[1..]) {
            pose = transition(&pose, u, traj.dt);
            assert_eq!(pose, w.pose());
        }
    }

    proptest! {
        #[test]
        fn limits_hold_on_random_polylines(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..6), h in -3.0f64..3.0, v0 in 0.0f64..0.5) {
            let pts: Vec<Point2> = raw.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let lim = limits();
            let traj = profile_trajectory(&pts, h, v0, &lim, 0.05);
            for w in traj.waypoints.windows(2) {
                prop_assert!(w[1].speed >= 0.0 && w[1].speed <= lim.v_max + 1e-12);
                prop_assert!((w[1].speed - w[0].speed).abs() <= lim.a_max * 0.05 + 1e-9);
            }
            for u in &traj.controls {
                prop_assert!(u.v_x >= -1e-12 && u.v_x <= lim.v_max + 1e-12);
            }
            let end = traj.waypoints.last().unwrap().position;
            prop_assert!((end - *pts.last().unwrap()).norm() < 0.3);
        }
    }
}
