//! Deterministic simulation engine for a team of blind UGVs guided by one
//! mapping UAV, with metrics, traces and a benchmark harness.

pub mod bench;
pub mod config;
pub mod metrics;
pub mod pgm;
pub mod sim;
pub mod trace;

pub use config::{Mode, SimConfig};
pub use metrics::{MetricsReport, RunStatus};
pub use sim::{run_ablation, run_baseline_self_perception, run_scenario, EngineError, RunOutput, Simulation};
