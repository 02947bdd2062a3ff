//! Line-delimited JSON event trace. Every record is also fed to a SHA-256
//! digest so runs can be compared without keeping the bytes around.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use airground_core::estimation::Belief;
use airground_core::uav_sched::{Trigger, VrptwInstance};
use airground_core::ugv_nav::CollisionInfo;
use airground_core::{Point2, Pose2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Start { label: String, mode: String, seed: u64, ugvs: usize, dt: f64 },
    UgvPose { t: f64, ugv: usize, truth: Pose2, belief: Option<Belief>, status: String },
    UavPose { t: f64, position: Point2, velocity: Point2 },
    Rpe { t: f64, ugv: usize, z_p: Point2, z_theta: f64 },
    Patch { t: f64, ugv: usize, center: Point2, occupied: usize, unknown: usize, bytes: usize },
    Request { t: f64, info: CollisionInfo },
    Withdraw { t: f64, ugv: usize },
    Served { t: f64, ugv: usize },
    Tour { t: f64, triggers: Vec<Trigger>, ugv_order: Vec<usize>, v_used: Option<f64>, escalations: usize, fallback: bool, instance: Option<InstanceDump> },
    /// StopAndWait interval `[start_step, end_step)`.
    Wait { ugv: usize, start_step: u64, end_step: u64, t_start: f64, t_end: f64 },
    Collision { t: f64, ugv: usize, obstacle: usize, truth: Pose2 },
    Contact { t: f64, a: usize, b: usize },
    Reach { t: f64, ugv: usize, confirmed: bool },
    End { t: f64, metrics: MetricsReport },
}

/// Solver input as logged. Node 0 is the UAV; a `null` window close is
/// unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDump {
    pub cost: Vec<Vec<f64>>,
    pub windows: Vec<(f64, Option<f64>)>,
    pub ugv_ids: Vec<usize>,
    pub support_points: Vec<Point2>,
}

impl From<&VrptwInstance> for InstanceDump {
    fn from(inst: &VrptwInstance) -> Self {
        Self {
            cost: inst.cost.clone(),
            windows: inst.windows.iter().map(|w| (w[0], w[1].is_finite().then_some(w[1]))).collect(),
            ugv_ids: inst.node_meta.iter().map(|m| m.ugv_id).collect(),
            support_points: inst.node_meta.iter().map(|m| m.p_ps).collect(),
        }
    }
}

pub struct TraceWriter {
    sink: Option<BufWriter<File>>,
    hasher: Sha256,
    records: u64,
    line: Vec<u8>,
}

impl TraceWriter {
    /// Digest only.
    pub fn detached() -> Self {
        Self { sink: None, hasher: Sha256::new(), records: 0, line: Vec::new() }
    }

    pub fn to_file(path: &Path) -> io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self { sink: Some(BufWriter::new(file)), ..Self::detached() })
    }

    pub fn write(&mut self, record: &Record) -> io::Result<()> {
        self.line.clear();
        serde_json::to_writer(&mut self.line, record).map_err(io::Error::other)?;
        self.line.push(b'\n');
        self.hasher.update(&self.line);
        self.records += 1;
        if let Some(sink) = &mut self.sink {
            sink.write_all(&self.line)?;
        }
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    /// Flushes the file and returns the hex digest of everything written.
    pub fn finish(self) -> io::Result<String> {
        if let Some(mut sink) = self.sink {
            sink.flush()?;
        }
        Ok(hex(&self.hasher.finalize()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Parses a trace back into records.
pub fn read_trace(text: &str) -> Result<Vec<Record>, serde_json::Error> {
    text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect()
}

/// Waiting steps per UGV recomputed from the wait intervals of a trace.
pub fn waiting_steps_from_trace(records: &[Record], ugv_count: usize) -> Vec<u64> {
    let mut steps = vec![0; ugv_count];
    for r in records {
        if let Record::Wait { ugv, start_step, end_step, .. } = r {
            steps[*ugv] += end_step - start_step;
        }
    }
    steps
}
