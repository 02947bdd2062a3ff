//! Planar geometry shared by every module.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// A point or free vector in the world plane, meters.
pub type Point2 = Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut r = angle.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// 2D rotation matrix for heading `theta`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Composes `self ∘ rel`: `rel` is expressed in this pose's body frame.
    pub fn compose(&self, rel: &Pose2) -> Pose2 {
        let p = self.position() + rotation(self.theta) * rel.position();
        Pose2::new(p.x, p.y, wrap_angle(self.theta + rel.theta))
    }

    /// Pose of `other` expressed in this pose's body frame.
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        let p = rotation(self.theta).transpose() * (other.position() - self.position());
        Pose2::new(p.x, p.y, wrap_angle(other.theta - self.theta))
    }
}

/// Shortest distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// First intersection distance of a ray with a disk boundary, if the ray
/// starts outside the disk and hits it.
pub fn ray_disk_intersection(origin: &Point2, dir: &Point2, center: &Point2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = dir.dot(&oc);
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}
