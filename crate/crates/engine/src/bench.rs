//! Benchmark matrix: environments × UGV counts × seeds.

use std::fmt::Write as _;
use std::path::Path;

use airground_core::world::{generate_scenario, Scenario};
use airground_core::Point2;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, SimConfig};
use crate::metrics::{mean_std, metrics_csv, MetricsReport};
use crate::sim::{run_scenario, EngineError, RunOutput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub obstacles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub environments: Vec<Environment>,
    pub ugv_counts: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl BenchSpec {
    pub fn standard(config: &SimConfig) -> Self {
        Self {
            environments: vec![
                Environment { name: "sparse".into(), obstacles: config.world.sparse_obstacles },
                Environment { name: "dense".into(), obstacles: config.world.dense_obstacles },
            ],
            ugv_counts: vec![1, 3, 5, 7],
            seeds: (1..=10).collect(),
        }
    }

    pub fn environment(&self, name: &str) -> Option<&Environment> {
        self.environments.iter().find(|e| e.name == name)
    }
}

pub fn bench_scenario(config: &SimConfig, env: &Environment, ugvs: usize, seed: u64) -> Result<Scenario, EngineError> {
    let extent = Point2::new(config.world.extent[0], config.world.extent[1]);
    Ok(generate_scenario(seed, extent, env.obstacles, ugvs)?)
}

pub fn cell_label(env: &Environment, ugvs: usize) -> String {
    format!("{}_{}ugv", env.name, ugvs)
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub environment: String,
    pub ugvs: usize,
    pub output: RunOutput,
}

/// Runs every cell of `spec` in `mode`, in a fixed order. With `out_dir`,
/// per-run traces and maps go there along with `metrics.csv` and
/// `summary.csv` for the whole matrix.
pub fn run_bench(config: &SimConfig, spec: &BenchSpec, mode: Mode, out_dir: Option<&Path>) -> Result<Vec<BenchRun>, EngineError> {
    let mut runs = Vec::new();
    for env in &spec.environments {
        for &n in &spec.ugv_counts {
            for &seed in &spec.seeds {
                let scenario = bench_scenario(config, env, n, seed)?;
                let output = run_scenario(config, &scenario, mode, &cell_label(env, n), out_dir)?;
                runs.push(BenchRun { environment: env.name.clone(), ugvs: n, output });
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("metrics.csv"), metrics_csv(runs.iter().map(|r| &r.output.report)))?;
        std::fs::write(dir.join("summary.csv"), summary_csv(&runs))?;
    }
    Ok(runs)
}

/// Aggregates over the seeds of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub environment: String,
    pub mode: Mode,
    pub ugvs: usize,
    pub runs: usize,
    pub failures: usize,
    pub collisions: u32,
    pub reach_time: (f64, f64),
    pub waiting_time: (f64, f64),
    pub max_waiting_time: f64,
    pub trajectory_length: (f64, f64),
    pub uav_trajectory_length: (f64, f64),
}

pub fn summarize(reports: &[&MetricsReport], environment: &str, ugvs: usize) -> CellSummary {
    let reach: Vec<f64> = reports.iter().filter_map(|r| r.mean_reach_time()).collect();
    let wait: Vec<f64> = reports.iter().map(|r| r.mean_waiting_time()).collect();
    let len: Vec<f64> = reports.iter().map(|r| r.mean_trajectory_length()).collect();
    let uav: Vec<f64> = reports.iter().map(|r| r.uav_trajectory_length).collect();
    CellSummary {
        environment: environment.to_string(),
        mode: reports.first().map_or(Mode::Proposed, |r| r.mode),
        ugvs,
        runs: reports.len(),
        failures: reports.iter().filter(|r| r.is_failure()).count(),
        collisions: reports.iter().map(|r| r.collisions).sum(),
        reach_time: mean_std(&reach),
        waiting_time: mean_std(&wait),
        max_waiting_time: reports.iter().map(|r| r.max_waiting_time()).fold(0.0, f64::max),
        trajectory_length: mean_std(&len),
        uav_trajectory_length: mean_std(&uav),
    }
}

/// Summaries in matrix order.
pub fn summaries(runs: &[BenchRun]) -> Vec<CellSummary> {
    let mut cells: Vec<(String, usize)> = Vec::new();
    for r in runs {
        if !cells.iter().any(|(e, n)| *e == r.environment && *n == r.ugvs) {
            cells.push((r.environment.clone(), r.ugvs));
        }
    }
    cells
        .iter()
        .map(|(env, n)| {
            let reports: Vec<&MetricsReport> = runs.iter().filter(|r| r.environment == *env && r.ugvs == *n).map(|r| &r.output.report).collect();
            summarize(&reports, env, *n)
        })
        .collect()
}

pub fn summary_csv(runs: &[BenchRun]) -> String {
    let mut out = String::from(
        "environment,mode,ugvs,runs,failures,collisions,reach_mean,reach_std,wait_mean,wait_std,wait_max,traj_mean,traj_std,uav_traj_mean,uav_traj_std\n",
    );
    for s in summaries(runs) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            s.environment,
            s.mode.name(),
            s.ugvs,
            s.runs,
            s.failures,
            s.collisions,
            s.reach_time.0,
            s.reach_time.1,
            s.waiting_time.0,
            s.waiting_time.1,
            s.max_waiting_time,
            s.trajectory_length.0,
            s.trajectory_length.1,
            s.uav_trajectory_length.0,
            s.uav_trajectory_length.1,
        );
    }
    out
}
