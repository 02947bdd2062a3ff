//! Simulated sensing: the UAV's planar range scanner, the relative-pose
//! channel between UAV and UGVs, and UGV wheel odometry.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::{point_segment_distance, ray_disk_intersection, wrap_angle, Point2, Pose2};
use crate::rng::RngStream;
use crate::world::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Relative to the scanner heading.
    pub azimuth: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub pose: Pose2,
    pub beams: Vec<Beam>,
    pub max_range: f64,
}

/// Noiseless 360° scan. Obstacles that contain the scanner's ground
/// projection are ignored: the UAV flies above them.
pub fn simulate_lidar(pose: &Pose2, scenario: &Scenario, max_range: f64, beam_count: usize) -> Scan {
    assert!(beam_count >= 1, "scan needs at least one beam");
    let origin = pose.position();
    let nearby: Vec<_> = scenario
        .obstacles
        .iter()
        .filter(|o| {
            let d = (o.center - origin).norm();
            d > o.radius && d - o.radius < max_range
        })
        .collect();
    let beams = (0..beam_count)
        .map(|i| {
            let azimuth = TAU * i as f64 / beam_count as f64;
            let heading = pose.theta + azimuth;
            let dir = Point2::new(heading.cos(), heading.sin());
            let first = nearby
                .iter()
                .filter_map(|o| ray_disk_intersection(&origin, &dir, &o.center, o.radius))
                .fold(f64::INFINITY, f64::min);
            if first <= max_range {
                Beam { azimuth, range: first, hit: true }
            } else {
                Beam { azimuth, range: max_range, hit: false }
            }
        })
        .collect();
    Scan { pose: *pose, beams, max_range }
}

/// Body-frame wheel odometry reading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSample {
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
    pub stamp: f64,
}

impl ControlSample {
    pub fn new(v_x: f64, v_y: f64, omega: f64) -> Self {
        Self { v_x, v_y, omega, stamp: 0.0 }
    }

    pub fn at(mut self, stamp: f64) -> Self {
        self.stamp = stamp;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryNoise {
    pub sigma_vx: f64,
    pub sigma_vy: f64,
    pub sigma_omega: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self { sigma_vx: 0.0336, sigma_vy: 0.005, sigma_omega: 0.0292 }
    }
}

impl OdometryNoise {
    pub fn noiseless() -> Self {
        Self { sigma_vx: 0.0, sigma_vy: 0.0, sigma_omega: 0.0 }
    }
}

pub fn sample_wheel_odometry(true_twist: &ControlSample, noise: &OdometryNoise, stream: &mut RngStream) -> ControlSample {
    ControlSample {
        v_x: true_twist.v_x + stream.gaussian(noise.sigma_vx),
        v_y: true_twist.v_y + stream.gaussian(noise.sigma_vy),
        omega: true_twist.omega + stream.gaussian(noise.sigma_omega),
        stamp: true_twist.stamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpeConfig {
    pub range: f64,
    pub sigma_p: f64,
    pub sigma_theta: f64,
    /// Optional field-of-view half angle around the UAV heading; `None` is omnidirectional.
    pub fov_half_angle: Option<f64>,
}

impl Default for RpeConfig {
    fn default() -> Self {
        Self { range: 5.0, sigma_p: 0.2, sigma_theta: 0.05, fov_half_angle: None }
    }
}

impl RpeConfig {
    pub fn noise_cov(&self) -> Matrix3<f64> {
        let p2 = self.sigma_p * self.sigma_p;
        Matrix3::from_diagonal(&nalgebra::Vector3::new(p2, p2, self.sigma_theta * self.sigma_theta))
    }
}

/// World-frame UGV pose observed through the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeMeasurement {
    pub ugv_id: usize,
    pub z_p: Point2,
    pub z_theta: f64,
    pub noise_cov: Matrix3<f64>,
    pub stamp: f64,
}

impl RpeMeasurement {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.z_p.x, self.z_p.y, self.z_theta)
    }

    pub fn is_finite(&self) -> bool {
        self.z_p.iter().all(|v| v.is_finite()) && self.z_theta.is_finite() && self.noise_cov.iter().all(|v| v.is_finite())
    }
}

/// Whether the straight segment between `a` and `b` clears every obstacle.
/// Obstacles containing either endpoint are ignored so the relation is
/// symmetric and a UAV hovering over an obstacle can still see past it.
pub fn line_of_sight(scenario: &Scenario, a: &Point2, b: &Point2) -> bool {
    scenario.obstacles.iter().all(|o| {
        o.contains(a) || o.contains(b) || point_segment_distance(&o.center, a, b) > o.radius
    })
}

/// Simulates one relative-pose measurement, or `None` when the UGV is out of
/// range, outside the field of view or occluded.
#[allow(clippy::too_many_arguments)]
pub fn measure_relative_pose(
    ugv_id: usize,
    true_uav_pose: &Pose2,
    uav_odom_pose: &Pose2,
    true_ugv_pose: &Pose2,
    scenario: &Scenario,
    config: &RpeConfig,
    stream: &mut RngStream,
    stamp: f64,
) -> Option<RpeMeasurement> {
    let a = true_uav_pose.position();
    let g = true_ugv_pose.position();
    if (g - a).norm() > config.range || !line_of_sight(scenario, &a, &g) {
        return None;
    }
    let rel = true_uav_pose.relative(true_ugv_pose);
    if let Some(half) = config.fov_half_angle {
        if rel.y.atan2(rel.x).abs() > half {
            return None;
        }
    }
    let noisy = Pose2::new(
        rel.x + stream.gaussian(config.sigma_p),
        rel.y + stream.gaussian(config.sigma_p),
        wrap_angle(rel.theta + stream.gaussian(config.sigma_theta)),
    );
    let world = uav_odom_pose.compose(&noisy);
    Some(RpeMeasurement {
        ugv_id,
        z_p: world.position(),
        z_theta: world.theta,
        noise_cov: config.noise_cov(),
        stamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Obstacle;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn world(obstacles: Vec<Obstacle>) -> Scenario {
        Scenario {
            extent: Point2::new(27.0, 27.0),
            obstacles,
            ugv_starts: vec![Pose2::new(1.0, 1.0, 0.0)],
            ugv_goals: vec![Point2::new(20.0, 20.0)],
            uav_start: Pose2::new(1.0, 2.0, 0.0),
            seed: 0,
        }
    }

    #[test]
    fn empty_world_scan_misses() {
        let scan = simulate_lidar(&Pose2::new(5.0, 5.0, 0.3), &world(vec![]), 8.0, 360);
        assert_eq!(scan.beams.len(), 360);
        assert!(scan.beams.iter().all(|b| b.range == 8.0 && !b.hit));
    }

    #[test]
    fn forward_beam_hits_disk() {
        let s = world(vec![Obstacle { center: Point2::new(8.0, 5.0), radius: 0.5 }]);
        let scan = simulate_lidar(&Pose2::new(5.0, 5.0, 0.0), &s, 8.0, 360);
        assert!((scan.beams[0].range - 2.5).abs() < 1e-12);
        assert!(scan.beams[0].hit);
        assert!(!scan.beams[180].hit);
    }

    #[test]
    fn disk_beyond_range_is_invisible() {
        let s = world(vec![Obstacle { center: Point2::new(14.0, 5.0), radius: 0.5 }]);
        let scan = simulate_lidar(&Pose2::new(5.0, 5.0, 0.0), &s, 8.0, 360);
        assert!(scan.beams.iter().all(|b| b.range == 8.0 && !b.hit));
    }

    #[test]
    fn scan_ranges_in_bounds() {
        let s = crate::world::generate_scenario(4, Point2::new(27.0, 27.0), 80, 3).unwrap();
        let scan = simulate_lidar(&Pose2::new(13.0, 13.0, 1.0), &s, 8.0, 720);
        for (i, b) in scan.beams.iter().enumerate() {
            assert!(b.range > 0.0 && b.range <= 8.0);
            assert!(b.hit || b.range == 8.0);
            assert!((b.azimuth - TAU * i as f64 / 720.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_odometry_is_exact() {
        let mut rng = RngStream::new(1, "odom");
        let twist = ControlSample::new(0.4, 0.0, -0.2);
        let out = sample_wheel_odometry(&twist, &OdometryNoise::noiseless(), &mut rng);
        assert_eq!(out, twist);
    }

    fn std_dev(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn odometry_noise_statistics() {
        let noise = OdometryNoise::default();
        let mut rng = RngStream::new(11, "odom");
        let twist = ControlSample::new(0.5, 0.0, 0.3);
        let samples: Vec<_> = (0..100_000).map(|_| sample_wheel_odometry(&twist, &noise, &mut rng)).collect();
        let (mvx, svx) = std_dev(&samples.iter().map(|s| s.v_x).collect::<Vec<_>>());
        let (_, svy) = std_dev(&samples.iter().map(|s| s.v_y).collect::<Vec<_>>());
        let (_, sw) = std_dev(&samples.iter().map(|s| s.omega).collect::<Vec<_>>());
        assert!((mvx - 0.5).abs() < 0.001);
        assert!((svx / 0.0336 - 1.0).abs() < 0.05);
        assert!((svy / 0.005 - 1.0).abs() < 0.05);
        assert!((sw / 0.0292 - 1.0).abs() < 0.05);
    }

    #[test]
    fn rpe_noise_statistics() {
        let s = world(vec![]);
        let cfg = RpeConfig::default();
        let mut rng = RngStream::new(5, "rpe");
        let uav = Pose2::new(5.0, 5.0, 0.7);
        let ugv = Pose2::new(6.0, 6.0, -0.4);
        let zs: Vec<_> = (0..100_000)
            .map(|i| measure_relative_pose(0, &uav, &uav, &ugv, &s, &cfg, &mut rng, i as f64).unwrap())
            .collect();
        let (_, sx) = std_dev(&zs.iter().map(|z| z.z_p.x).collect::<Vec<_>>());
        let (_, sy) = std_dev(&zs.iter().map(|z| z.z_p.y).collect::<Vec<_>>());
        let (_, st) = std_dev(&zs.iter().map(|z| z.z_theta).collect::<Vec<_>>());
        assert!((sx / 0.2 - 1.0).abs() < 0.05);
        assert!((sy / 0.2 - 1.0).abs() < 0.05);
        assert!((st / 0.05 - 1.0).abs() < 0.05);
    }

    #[test]
    fn rpe_range_gate() {
        let s = world(vec![]);
        let mut rng = RngStream::new(1, "rpe");
        let uav = Pose2::new(5.0, 5.0, 0.0);
        let ugv = Pose2::new(11.0, 5.0, 0.0);
        assert!(measure_relative_pose(0, &uav, &uav, &ugv, &s, &RpeConfig::default(), &mut rng, 0.0).is_none());
    }

    #[test]
    fn rpe_occluded_by_midpoint_disk() {
        let s = world(vec![Obstacle { center: Point2::new(6.0, 5.0), radius: 0.5 }]);
        let mut rng = RngStream::new(1, "rpe");
        let uav = Pose2::new(5.0, 5.0, 0.0);
        let ugv = Pose2::new(7.0, 5.0, 0.0);
        assert!(measure_relative_pose(0, &uav, &uav, &ugv, &s, &RpeConfig::default(), &mut rng, 0.0).is_none());
    }

    #[test]
    fn fov_gate_when_enabled() {
        let s = world(vec![]);
        let mut rng = RngStream::new(1, "rpe");
        let cfg = RpeConfig { fov_half_angle: Some(PI / 4.0), ..RpeConfig::default() };
        let uav = Pose2::new(5.0, 5.0, 0.0);
        assert!(measure_relative_pose(0, &uav, &uav, &Pose2::new(3.0, 5.0, 0.0), &s, &cfg, &mut rng, 0.0).is_none());
        assert!(measure_relative_pose(0, &uav, &uav, &Pose2::new(7.0, 5.0, 0.0), &s, &cfg, &mut rng, 0.0).is_some());
    }

    proptest! {
        #[test]
        fn noiseless_rpe_returns_true_pose(ax in 0.0f64..27.0, ay in 0.0f64..27.0, at in -PI..PI,
                                           r in 0.0f64..5.0, bearing in -PI..PI, gt in -PI..PI) {
            let s = world(vec![]);
            let cfg = RpeConfig { sigma_p: 0.0, sigma_theta: 0.0, ..RpeConfig::default() };
            let mut rng = RngStream::new(2, "rpe");
            let uav = Pose2::new(ax, ay, at);
            let ugv = Pose2::new(ax + r * bearing.cos(), ay + r * bearing.sin(), gt);
            let z = measure_relative_pose(3, &uav, &uav, &ugv, &s, &cfg, &mut rng, 1.0).unwrap();
            prop_assert!((z.z_p - ugv.position()).norm() < 1e-9);
            prop_assert!(wrap_angle(z.z_theta - gt).abs() < 1e-9);
            prop_assert!(z.z_theta > -PI && z.z_theta <= PI);
        }

        #[test]
        fn occlusion_is_symmetric(ax in 0.0f64..27.0, ay in 0.0f64..27.0, bx in 0.0f64..27.0, by in 0.0f64..27.0, seed in 0u64..20) {
            let s = crate::world::generate_scenario(seed, Point2::new(27.0, 27.0), 40, 1).unwrap();
            let a = Point2::new(ax, ay);
            let b = Point2::new(bx, by);
            prop_assert_eq!(line_of_sight(&s, &a, &b), line_of_sight(&s, &b, &a));
        }
    }
}
