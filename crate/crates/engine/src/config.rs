//! Run configuration. Every tunable lives here and round-trips through TOML.

use std::path::Path;

use airground_core::estimation::NoiseModel;
use airground_core::sensors::{OdometryNoise, RpeConfig};
use airground_core::uav_sched::{SchedulerConfig, SchedulingMode};
use airground_core::ugv_nav::NavConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Operating mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    Proposed,
    NoRpe,
    NoUncertainty,
    NoScheduling,
    NoTimeWindow,
    /// Every UGV carries its own range sensor; no UAV.
    SelfPerception,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::NoRpe => "no_rpe",
            Mode::NoUncertainty => "no_uncertainty",
            Mode::NoScheduling => "no_scheduling",
            Mode::NoTimeWindow => "no_time_window",
            Mode::SelfPerception => "self_perception",
        }
    }

    pub const ABLATIONS: [Mode; 4] = [Mode::NoRpe, Mode::NoUncertainty, Mode::NoScheduling, Mode::NoTimeWindow];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub extent: [f64; 2],
    pub sparse_obstacles: usize,
    pub dense_obstacles: usize,
    pub ugv_radius: f64,
    pub resolution: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { extent: [27.0, 27.0], sparse_obstacles: 40, dense_obstacles: 80, ugv_radius: 0.3, resolution: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub lidar_range: f64,
    pub lidar_beams: usize,
    pub scan_period: f64,
    pub rpe: RpeConfig,
    /// Interval between relative-pose and map-patch emissions.
    pub emission_period: f64,
    pub patch_half_extent: f64,
    pub odometry: OdometryNoise,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            lidar_range: 8.0,
            lidar_beams: 720,
            scan_period: 0.1,
            rpe: RpeConfig::default(),
            emission_period: 0.1,
            patch_half_extent: 2.5,
            odometry: OdometryNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub time_cap: f64,
    /// Extra message latency in steps on top of next-step delivery.
    pub extra_latency_steps: u32,
    /// True-pose distance to the goal that confirms arrival.
    pub goal_confirm: f64,
    pub pose_trace_period: f64,
    pub world: WorldConfig,
    pub sensing: SensingConfig,
    pub nav: NavConfig,
    pub sched: SchedulerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            time_cap: 600.0,
            extra_latency_steps: 0,
            goal_confirm: 0.5,
            pose_trace_period: 1.0,
            world: WorldConfig::default(),
            sensing: SensingConfig::default(),
            nav: NavConfig::default(),
            sched: SchedulerConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("dt", self.dt),
            ("time_cap", self.time_cap),
            ("world.resolution", self.world.resolution),
            ("sensing.lidar_range", self.sensing.lidar_range),
            ("sensing.scan_period", self.sensing.scan_period),
            ("sensing.emission_period", self.sensing.emission_period),
            ("nav.limits.v_max", self.nav.limits.v_max),
            ("nav.limits.a_max", self.nav.limits.a_max),
            ("sched.base_v_max", self.sched.base_v_max),
            ("sched.a_max", self.sched.a_max),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid(format!("{name} must be positive")));
        }
        if (self.nav.dt - self.dt).abs() > 1e-12 {
            return Err(ConfigError::Invalid("nav.dt must equal dt".into()));
        }
        if self.sensing.lidar_beams == 0 {
            return Err(ConfigError::Invalid("sensing.lidar_beams must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::new(&self.sensing.odometry, &self.sensing.rpe)
    }

    /// Copy with the switches for `mode` applied.
    pub fn for_mode(&self, mode: Mode) -> SimConfig {
        let mut cfg = self.clone();
        match mode {
            Mode::Proposed | Mode::SelfPerception => {}
            Mode::NoRpe => cfg.nav.use_rpe_updates = false,
            Mode::NoUncertainty => {
                // the planning margin over the collision inflation is the 3σ allowance
                cfg.nav.use_uncertainty = false;
                cfg.nav.planning_inflation = cfg.nav.collision_inflation;
                cfg.nav.fallback_inflation = cfg.nav.collision_inflation;
            }
            Mode::NoScheduling => cfg.sched.mode = SchedulingMode::Greedy,
            Mode::NoTimeWindow => cfg.sched.mode = SchedulingMode::NoWindows,
        }
        cfg
    }
}
