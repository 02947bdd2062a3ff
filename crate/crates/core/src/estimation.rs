//! Per-UGV extended Kalman filter over `(p_x, p_y, θ)`.
//!
//! Prediction integrates body-frame wheel odometry through the unicycle
//! transition; the update consumes world-frame poses relayed by the UAV. The
//! measurement observes the full state, so the observation Jacobian is the
//! identity.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation, wrap_angle, Pose2};
use crate::sensors::{ControlSample, OdometryNoise, RpeConfig, RpeMeasurement};

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("belief has not been initialized by a relative-pose measurement")]
    Uninitialized,
    #[error("belief is already initialized")]
    AlreadyInitialized,
    #[error("measurement contains non-finite values")]
    NonFinite,
    #[error("measurement stamp {stamp} precedes the last applied measurement {last}")]
    OutOfOrder { stamp: f64, last: f64 },
    #[error("innovation covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mean: Pose2,
    pub cov: Matrix3<f64>,
    pub stamp: f64,
    pub initialized: bool,
    /// Stamp of the last measurement folded in.
    pub last_update: f64,
}

impl Belief {
    pub fn uninitialized() -> Self {
        Self { mean: Pose2::new(0.0, 0.0, 0.0), cov: Matrix3::zeros(), stamp: 0.0, initialized: false, last_update: f64::NEG_INFINITY }
    }

    pub fn position_cov(&self) -> nalgebra::Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Control noise `Q` and measurement noise `R`, both diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub q: Matrix3<f64>,
    pub r: Matrix3<f64>,
}

impl NoiseModel {
    pub fn new(odometry: &OdometryNoise, rpe: &RpeConfig) -> Self {
        let q = Matrix3::from_diagonal(&Vector3::new(
            odometry.sigma_vx.powi(2),
            odometry.sigma_vy.powi(2),
            odometry.sigma_omega.powi(2),
        ));
        Self { q, r: rpe.noise_cov() }
    }

    pub fn zero() -> Self {
        Self { q: Matrix3::zeros(), r: Matrix3::zeros() }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::new(&OdometryNoise::default(), &RpeConfig::default())
    }
}

/// Unicycle transition: position advances by the body velocity rotated into
/// the world at the prior heading.
pub fn transition(x: &Pose2, u: &ControlSample, dt: f64) -> Pose2 {
    let dp = rotation(x.theta) * nalgebra::Vector2::new(u.v_x, u.v_y) * dt;
    Pose2::new(x.x + dp.x, x.y + dp.y, wrap_angle(x.theta + u.omega * dt))
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u)` of [`transition`].
pub fn transition_jacobians(x: &Pose2, u: &ControlSample, dt: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = x.theta.sin_cos();
    #[rustfmt::skip]
    let f = Matrix3::new(
        1.0, 0.0, (-u.v_x * s - u.v_y * c) * dt,
        0.0, 1.0, (u.v_x * c - u.v_y * s) * dt,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let b = Matrix3::new(
        c * dt, -s * dt, 0.0,
        s * dt, c * dt, 0.0,
        0.0, 0.0, dt,
    );
    (f, b)
}

/// Symmetrizes and clamps negative eigenvalues to zero.
fn condition(p: Matrix3<f64>) -> Matrix3<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() >= 0.0 {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let out = eig.eigenvectors * Matrix3::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

pub fn ekf_predict(b: &Belief, u: &ControlSample, dt: f64, noise: &NoiseModel) -> Result<Belief, EstimationError> {
    if !b.initialized {
        return Err(EstimationError::Uninitialized);
    }
    let (f, bj) = transition_jacobians(&b.mean, u, dt);
    let cov = condition(f * b.cov * f.transpose() + bj * noise.q * bj.transpose());
    Ok(Belief { mean: transition(&b.mean, u, dt), cov, stamp: b.stamp + dt, ..*b })
}

/// Measurement update with the Joseph-form covariance. The angular innovation
/// is wrapped before the gain is applied.
pub fn ekf_update(b: &Belief, z: &RpeMeasurement) -> Result<Belief, EstimationError> {
    if !b.initialized {
        return Err(EstimationError::Uninitialized);
    }
    if !z.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    if z.stamp < b.last_update {
        return Err(EstimationError::OutOfOrder { stamp: z.stamp, last: b.last_update });
    }
    let innovation = Vector3::new(z.z_p.x - b.mean.x, z.z_p.y - b.mean.y, wrap_angle(z.z_theta - b.mean.theta));
    let s = b.cov + z.noise_cov;
    let s_inv = s.try_inverse().ok_or(EstimationError::Singular)?;
    let k = b.cov * s_inv;
    let dx = k * innovation;
    let mean = Pose2::new(b.mean.x + dx[0], b.mean.y + dx[1], wrap_angle(b.mean.theta + dx[2]));
    let ikh = Matrix3::identity() - k;
    let cov = condition(ikh * b.cov * ikh.transpose() + k * z.noise_cov * k.transpose());
    Ok(Belief { mean, cov, last_update: z.stamp, ..*b })
}

pub fn initialize_belief(z: &RpeMeasurement, initial_cov: &Matrix3<f64>) -> Result<Belief, EstimationError> {
    if !z.is_finite() || !initial_cov.iter().all(|v| v.is_finite()) {
        return Err(EstimationError::NonFinite);
    }
    Ok(Belief { mean: z.pose(), cov: condition(*initial_cov), stamp: z.stamp, initialized: true, last_update: z.stamp })
}

/// Lifecycle wrapper: the first measurement initializes, later ones update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseFilter {
    belief: Belief,
    noise: NoiseModel,
    /// When false, measurements after initialization are ignored.
    pub updates_enabled: bool,
}

impl PoseFilter {
    pub fn new(noise: NoiseModel) -> Self {
        Self { belief: Belief::uninitialized(), noise, updates_enabled: true }
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn is_initialized(&self) -> bool {
        self.belief.initialized
    }

    pub fn initialize(&mut self, z: &RpeMeasurement) -> Result<(), EstimationError> {
        if self.belief.initialized {
            return Err(EstimationError::AlreadyInitialized);
        }
        self.belief = initialize_belief(z, &self.noise.r)?;
        Ok(())
    }

    /// Advances the clock; a no-op on the belief until initialized.
    pub fn predict(&mut self, u: &ControlSample, dt: f64) {
        if self.belief.initialized {
            self.belief = ekf_predict(&self.belief, u, dt, &self.noise).expect("initialized");
        } else {
            self.belief.stamp += dt;
        }
    }

    /// Folds in a measurement. Returns whether the belief changed.
    pub fn observe(&mut self, z: &RpeMeasurement) -> Result<bool, EstimationError> {
        if !self.belief.initialized {
            let stamp = self.belief.stamp;
            self.initialize(z)?;
            self.belief.stamp = stamp.max(z.stamp);
            return Ok(true);
        }
        if !self.updates_enabled {
            return Ok(false);
        }
        match ekf_update(&self.belief, z) {
            Ok(b) => {
                self.belief = b;
                Ok(true)
            }
            Err(EstimationError::OutOfOrder { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }
}
