//! Per-run metrics and their CSV rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
    Timeout,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Failed => "failed",
            RunStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgvMetrics {
    pub id: usize,
    /// Sim time of confirmed arrival; `None` if the UGV never arrived.
    pub reach_time: Option<f64>,
    pub waiting_steps: u64,
    pub waiting_time: f64,
    pub trajectory_length: f64,
    pub straight_line: f64,
    pub collisions: u32,
    pub replans: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub mode: Mode,
    pub seed: u64,
    pub ugvs: Vec<UgvMetrics>,
    pub uav_trajectory_length: f64,
    pub collisions: u32,
    /// Steps on which two UGV footprints overlapped.
    pub ugv_contacts: u32,
    pub run_status: RunStatus,
    pub end_time: f64,
    pub reschedules: u64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    pub fn mean_reach_time(&self) -> Option<f64> {
        if self.ugvs.iter().any(|u| u.reach_time.is_none()) {
            return None;
        }
        mean(self.ugvs.iter().filter_map(|u| u.reach_time))
    }

    pub fn mean_waiting_time(&self) -> f64 {
        mean(self.ugvs.iter().map(|u| u.waiting_time)).unwrap_or(0.0)
    }

    pub fn max_waiting_time(&self) -> f64 {
        self.ugvs.iter().map(|u| u.waiting_time).fold(0.0, f64::max)
    }

    pub fn mean_trajectory_length(&self) -> f64 {
        mean(self.ugvs.iter().map(|u| u.trajectory_length)).unwrap_or(0.0)
    }

    /// Collision, wait-forever or false-arrival failure.
    pub fn is_failure(&self) -> bool {
        self.run_status != RunStatus::Complete
    }
}

pub const CSV_HEADER: &str = "label,mode,seed,ugv,status,reach_time,waiting_time,max_waiting_time,trajectory_length,uav_trajectory_length,collisions,ugv_contacts";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// One row per UGV plus a summary row (`ugv` = `all`) holding means across
/// UGVs. `max_waiting_time` is filled on the summary row only.
pub fn csv_rows(report: &MetricsReport, out: &mut String) {
    let head = format!("{},{},{}", report.label, report.mode.name(), report.seed);
    for u in &report.ugvs {
        let _ = writeln!(
            out,
            "{head},{},{},{},{:.3},,{:.3},{:.3},{},",
            u.id,
            report.run_status.name(),
            opt(u.reach_time),
            u.waiting_time,
            u.trajectory_length,
            report.uav_trajectory_length,
            u.collisions,
        );
    }
    let _ = writeln!(
        out,
        "{head},all,{},{},{:.3},{:.3},{:.3},{:.3},{},{}",
        report.run_status.name(),
        opt(report.mean_reach_time()),
        report.mean_waiting_time(),
        report.max_waiting_time(),
        report.mean_trajectory_length(),
        report.uav_trajectory_length,
        report.collisions,
        report.ugv_contacts,
    );
}

pub fn metrics_csv<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        csv_rows(r, &mut out);
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}
