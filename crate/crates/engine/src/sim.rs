//! Fixed-step simulation of the UGV team and the supporting UAV.

use std::collections::VecDeque;
use std::path::Path;

use airground_core::estimation::{transition, Belief, NoiseModel};
use airground_core::mapsync::{encode_map_patch, integrate_scan, MapPatch};
use airground_core::rng::RngStream;
use airground_core::sensors::{measure_relative_pose, sample_wheel_odometry, simulate_lidar, ControlSample, OdometryNoise, RpeMeasurement};
use airground_core::uav_sched::{step_uav, UavScheduler, UavState};
use airground_core::ugv_nav::{CollisionInfo, MotionMode, NavStatus, UgvNavigator};
use airground_core::world::{CellState, GridGeometry, GridMap, Scenario};
use airground_core::{Point2, Pose2};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Mode, SimConfig};
use crate::metrics::{MetricsReport, RunStatus, UgvMetrics};
use crate::trace::{Record, TraceWriter};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("invalid scenario: {0}")]
    Scenario(#[from] airground_core::world::WorldError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize)]
enum Payload {
    Rpe(RpeMeasurement),
    Patch(MapPatch),
    Request(CollisionInfo),
    Withdraw(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum Endpoint {
    Uav,
    Ugv(usize),
}

#[derive(Debug, Clone, Serialize)]
struct Message {
    deliver_step: u64,
    to: Endpoint,
    payload: Payload,
}

#[derive(Debug, Clone)]
struct UgvAgent {
    nav: UgvNavigator,
    truth: Pose2,
    odometry: ControlSample,
    odom_stream: RngStream,
    rpe_stream: RngStream,
    inbox: Vec<Payload>,
    length: f64,
    waiting_steps: u64,
    wait_started: Option<u64>,
    reach_time: Option<f64>,
    false_reach: bool,
    collisions: u32,
    /// Last request sent, used to log only material changes.
    last_request: Option<CollisionInfo>,
    /// Own occupancy grid for the self-perception baseline.
    own_map: Option<GridMap>,
    in_contact: Vec<bool>,
}

#[derive(Debug, Clone)]
struct UavAgent {
    state: UavState,
    map: GridMap,
    scheduler: UavScheduler,
    length: f64,
}

/// Serializable view of the whole simulation state.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub step: u64,
    pub clock: f64,
    pub ugv_truth: Vec<Pose2>,
    pub ugv_beliefs: Vec<Belief>,
    pub ugv_status: Vec<NavStatus>,
    pub uav: Option<UavState>,
    pub requests: Vec<CollisionInfo>,
    pub queued_messages: usize,
    pub rng_draws: Vec<(String, u64)>,
    pub uav_map_digest: Option<String>,
}

pub struct Simulation {
    config: SimConfig,
    mode: Mode,
    label: String,
    scenario: Scenario,
    step_index: u64,
    clock: f64,
    ugvs: Vec<UgvAgent>,
    uav: Option<UavAgent>,
    queue: VecDeque<Message>,
    trace: TraceWriter,
    status: Option<RunStatus>,
    ugv_contacts: u32,
    scan_every: u64,
    emit_every: u64,
    pose_every: u64,
}

fn steps_per(period: f64, dt: f64) -> u64 {
    ((period / dt).round() as u64).max(1)
}

impl Simulation {
    pub fn new(config: &SimConfig, scenario: &Scenario, mode: Mode, label: &str, trace: TraceWriter) -> Result<Self, EngineError> {
        config.validate()?;
        scenario.validate(config.world.ugv_radius)?;
        let cfg = config.for_mode(mode);
        let geometry = GridGeometry::covering(cfg.world.resolution, Point2::zeros(), scenario.extent);
        let baseline = mode == Mode::SelfPerception;
        let (noise, odometry) = if baseline {
            (NoiseModel::zero(), OdometryNoise::noiseless())
        } else {
            (cfg.noise_model(), cfg.sensing.odometry)
        };
        let mut nav_cfg = cfg.nav;
        if baseline {
            nav_cfg.use_wait_guard = false;
        }
        let n = scenario.ugv_count();
        let ugvs = (0..n)
            .map(|i| UgvAgent {
                nav: UgvNavigator::new(i, scenario.ugv_starts[i].position(), scenario.ugv_goals[i], geometry, nav_cfg, noise),
                truth: scenario.ugv_starts[i],
                odometry: ControlSample::default(),
                odom_stream: RngStream::new(scenario.seed, &format!("ugv{i}/odometry")),
                rpe_stream: RngStream::new(scenario.seed, &format!("ugv{i}/rpe")),
                inbox: Vec::new(),
                length: 0.0,
                waiting_steps: 0,
                wait_started: None,
                reach_time: None,
                false_reach: false,
                collisions: 0,
                last_request: None,
                own_map: baseline.then(|| GridMap::new(geometry)),
                in_contact: vec![false; n],
            })
            .collect();
        let uav = (!baseline).then(|| UavAgent {
            state: UavState { position: scenario.uav_start.position(), velocity: Point2::zeros() },
            map: GridMap::new(geometry),
            scheduler: UavScheduler::new(cfg.sched),
            length: 0.0,
        });
        let mut cfg = cfg;
        cfg.sensing.odometry = odometry;
        let mut sim = Self {
            scan_every: steps_per(cfg.sensing.scan_period, cfg.dt),
            emit_every: steps_per(cfg.sensing.emission_period, cfg.dt),
            pose_every: steps_per(cfg.pose_trace_period, cfg.dt),
            config: cfg,
            mode,
            label: label.to_string(),
            scenario: scenario.clone(),
            step_index: 0,
            clock: 0.0,
            ugvs,
            uav,
            queue: VecDeque::new(),
            trace,
            status: None,
            ugv_contacts: 0,
        };
        sim.log(Record::Start { label: sim.label.clone(), mode: mode.name().into(), seed: scenario.seed, ugvs: n, dt: sim.config.dt })?;
        Ok(sim)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.status
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ugv_truth(&self, i: usize) -> Pose2 {
        self.ugvs[i].truth
    }

    pub fn ugv_belief(&self, i: usize) -> &Belief {
        self.ugvs[i].nav.belief()
    }

    pub fn ugv_status(&self, i: usize) -> NavStatus {
        self.ugvs[i].nav.status()
    }

    pub fn uav_state(&self) -> Option<UavState> {
        self.uav.as_ref().map(|u| u.state)
    }

    /// Map to render after the run: the UAV's map, or the union of the UGVs'
    /// own maps for the baseline.
    pub fn final_map(&self) -> GridMap {
        if let Some(uav) = &self.uav {
            return uav.map.clone();
        }
        let geometry = *self.ugvs[0].nav.map().geometry();
        let mut out = GridMap::new(geometry);
        for idx in 0..geometry.len() {
            let states = self.ugvs.iter().filter_map(|u| u.own_map.as_ref()).map(|m| m.get_flat(idx));
            let merged = states.fold(CellState::Unknown, |acc, s| match (acc, s) {
                (CellState::Occupied, _) | (_, CellState::Occupied) => CellState::Occupied,
                (CellState::Free, _) | (_, CellState::Free) => CellState::Free,
                _ => CellState::Unknown,
            });
            out.set_flat(idx, merged);
        }
        out
    }

    pub fn snapshot(&self) -> Snapshot {
        let mut rng_draws = Vec::new();
        for u in &self.ugvs {
            rng_draws.push((u.odom_stream.name().to_string(), u.odom_stream.draws()));
            rng_draws.push((u.rpe_stream.name().to_string(), u.rpe_stream.draws()));
        }
        Snapshot {
            step: self.step_index,
            clock: self.clock,
            ugv_truth: self.ugvs.iter().map(|u| u.truth).collect(),
            ugv_beliefs: self.ugvs.iter().map(|u| *u.nav.belief()).collect(),
            ugv_status: self.ugvs.iter().map(|u| u.nav.status()).collect(),
            uav: self.uav_state(),
            requests: self.uav.as_ref().map(|u| u.scheduler.requests().values().copied().collect()).unwrap_or_default(),
            queued_messages: self.queue.len(),
            rng_draws,
            uav_map_digest: self.uav.as_ref().map(|u| {
                let bytes: Vec<u8> = u.map.cells().iter().map(|c| *c as u8).collect();
                crate::trace::sha256_hex(&bytes)
            }),
        }
    }

    fn log(&mut self, record: Record) -> Result<(), EngineError> {
        self.trace.write(&record)?;
        Ok(())
    }

    fn send(&mut self, to: Endpoint, payload: Payload) {
        let deliver_step = self.step_index + 1 + self.config.extra_latency_steps as u64;
        self.queue.push_back(Message { deliver_step, to, payload });
    }

    fn active(&self, i: usize) -> bool {
        self.ugvs[i].reach_time.is_none()
    }

    /// Advances one fixed step. Does nothing once the run has ended.
    pub fn step(&mut self) -> Result<(), EngineError> {
        if self.status.is_some() {
            return Ok(());
        }
        let dt = self.config.dt;
        self.step_index += 1;
        self.clock = self.step_index as f64 * dt;
        let now = self.clock;

        self.move_robots(dt);
        if self.step_index % self.scan_every == 0 {
            self.scan()?;
        }
        if self.step_index % self.emit_every == 0 {
            self.emit(now)?;
        }
        self.deliver();
        for i in 0..self.ugvs.len() {
            self.estimate(i, dt)?;
        }
        for i in 0..self.ugvs.len() {
            self.navigate(i, now)?;
        }
        self.schedule(now)?;
        self.account(now)?;
        Ok(())
    }

    fn move_robots(&mut self, dt: f64) {
        for u in &mut self.ugvs {
            let cmd = u.nav.take_command();
            let next = transition(&u.truth, &cmd, dt);
            u.length += (next.position() - u.truth.position()).norm();
            u.truth = next;
            u.odometry = sample_wheel_odometry(&cmd, &self.config.sensing.odometry, &mut u.odom_stream);
        }
        if let Some(uav) = &mut self.uav {
            let (target, v_cap) = match uav.scheduler.waypoint() {
                Some((p, v)) => (Some(p), v),
                None => (None, self.config.sched.base_v_max),
            };
            let mut next = step_uav(&uav.state, target.as_ref(), v_cap, self.config.sched.a_max, dt);
            // braking can overshoot a waypoint on the map edge
            let hi = self.scenario.extent - Point2::repeat(1e-6);
            for k in 0..2 {
                let clamped = next.position[k].clamp(0.0, hi[k]);
                if clamped != next.position[k] {
                    next.position[k] = clamped;
                    next.velocity[k] = 0.0;
                }
            }
            uav.length += (next.position - uav.state.position).norm();
            uav.state = next;
        }
    }

    fn scan(&mut self) -> Result<(), EngineError> {
        let (range, beams) = (self.config.sensing.lidar_range, self.config.sensing.lidar_beams);
        if let Some(uav) = &mut self.uav {
            let pose = Pose2::new(uav.state.position.x, uav.state.position.y, 0.0);
            let scan = simulate_lidar(&pose, &self.scenario, range, beams);
            integrate_scan(&mut uav.map, &scan).expect("scan pose inside the map");
        }
        for u in &mut self.ugvs {
            let Some(map) = &mut u.own_map else { continue };
            if u.reach_time.is_some() {
                continue;
            }
            let scan = simulate_lidar(&u.truth, &self.scenario, range, beams);
            if integrate_scan(map, &scan).is_ok() {
                let patch = encode_map_patch(map, &u.truth.position(), range).expect("patch inside the map");
                u.inbox.push(Payload::Patch(patch));
            }
        }
        Ok(())
    }

    fn emit(&mut self, now: f64) -> Result<(), EngineError> {
        if self.uav.is_none() {
            if self.step_index == self.emit_every {
                // The baseline starts from a known pose.
                for u in &mut self.ugvs {
                    let z = RpeMeasurement { ugv_id: u.nav.id, z_p: u.truth.position(), z_theta: u.truth.theta, noise_cov: nalgebra::Matrix3::zeros(), stamp: now };
                    u.inbox.push(Payload::Rpe(z));
                }
            }
            return Ok(());
        }
        for i in 0..self.ugvs.len() {
            if !self.active(i) {
                continue;
            }
            let uav = self.uav.as_mut().unwrap();
            let uav_pose = Pose2::new(uav.state.position.x, uav.state.position.y, 0.0);
            let u = &mut self.ugvs[i];
            let Some(z) = measure_relative_pose(i, &uav_pose, &uav_pose, &u.truth, &self.scenario, &self.config.sensing.rpe, &mut u.rpe_stream, now) else {
                continue;
            };
            // Share the map around the predicted collision when one is pending.
            let center = uav.scheduler.requests().get(&i).map_or(z.z_p, |r| r.p_pc);
            let patch = encode_map_patch(&uav.map, &center, self.config.sensing.patch_half_extent).expect("patch inside the map");
            let served = uav.scheduler.observe_support(i, &uav.state.position);
            let patch_record = Record::Patch {
                t: now,
                ugv: i,
                center: patch.center,
                occupied: patch.occupied.len(),
                unknown: patch.unknown.len(),
                bytes: patch.to_bytes().len(),
            };
            self.log(Record::Rpe { t: now, ugv: i, z_p: z.z_p, z_theta: z.z_theta })?;
            self.log(patch_record)?;
            if served {
                self.log(Record::Served { t: now, ugv: i })?;
            }
            self.send(Endpoint::Ugv(i), Payload::Rpe(z));
            self.send(Endpoint::Ugv(i), Payload::Patch(patch));
        }
        Ok(())
    }

    fn deliver(&mut self) {
        while self.queue.front().is_some_and(|m| m.deliver_step <= self.step_index) {
            let msg = self.queue.pop_front().unwrap();
            match (msg.to, msg.payload) {
                (Endpoint::Ugv(i), payload) => self.ugvs[i].inbox.push(payload),
                (Endpoint::Uav, Payload::Request(info)) => self.uav.as_mut().unwrap().scheduler.receive_request(info),
                (Endpoint::Uav, Payload::Withdraw(id)) => self.uav.as_mut().unwrap().scheduler.withdraw(id),
                (Endpoint::Uav, _) => {}
            }
        }
    }

    fn estimate(&mut self, i: usize, dt: f64) -> Result<(), EngineError> {
        let u = &mut self.ugvs[i];
        for payload in std::mem::take(&mut u.inbox) {
            match payload {
                Payload::Patch(p) => {
                    u.nav.receive_patch(&p).expect("patch matches the grid");
                }
                Payload::Rpe(z) => {
                    // Rejected measurements leave the belief unchanged.
                    let _ = u.nav.receive_rpe(&z);
                }
                Payload::Request(_) | Payload::Withdraw(_) => {}
            }
        }
        let odom = u.odometry;
        u.nav.predict(&odom, dt);
        Ok(())
    }

    fn navigate(&mut self, i: usize, now: f64) -> Result<(), EngineError> {
        if !self.active(i) {
            return Ok(());
        }
        let out = self.ugvs[i].nav.update(now);
        let step = self.step_index;
        let u = &mut self.ugvs[i];
        match (out.mode, u.wait_started) {
            (MotionMode::StopAndWait, None) => u.wait_started = Some(step),
            (MotionMode::Proceed, Some(start)) => {
                u.wait_started = None;
                self.close_wait(i, start, step)?;
            }
            _ => {}
        }
        let u = &mut self.ugvs[i];
        if out.mode == MotionMode::StopAndWait {
            u.waiting_steps += 1;
        }
        if self.uav.is_none() {
            return Ok(());
        }
        match out.request {
            Some(info) => {
                let material = u.last_request.is_none_or(|last| last.p_ps != info.p_ps || last.p_pc != info.p_pc);
                u.last_request = Some(info);
                if material {
                    self.log(Record::Request { t: now, info })?;
                }
                self.send(Endpoint::Uav, Payload::Request(info));
            }
            None => {
                if u.last_request.take().is_some() {
                    self.log(Record::Withdraw { t: now, ugv: i })?;
                    self.send(Endpoint::Uav, Payload::Withdraw(i));
                }
            }
        }
        Ok(())
    }

    /// Logs a wait that covered steps `[start, end)`.
    fn close_wait(&mut self, i: usize, start: u64, end: u64) -> Result<(), EngineError> {
        let dt = self.config.dt;
        self.log(Record::Wait { ugv: i, start_step: start, end_step: end, t_start: start as f64 * dt, t_end: end as f64 * dt })
    }

    fn schedule(&mut self, now: f64) -> Result<(), EngineError> {
        let Some(uav) = &mut self.uav else { return Ok(()) };
        let state = uav.state;
        if let Some(r) = uav.scheduler.update(now, &state) {
            let record = Record::Tour {
                t: r.at,
                triggers: r.triggers,
                ugv_order: r.ugv_order,
                v_used: r.outcome.as_ref().map(|o| o.tour.v_used),
                escalations: r.outcome.as_ref().map_or(0, |o| o.escalations),
                fallback: r.outcome.as_ref().is_some_and(|o| o.fallback),
                instance: r.outcome.as_ref().map(|o| (&o.instance).into()),
            };
            self.log(record)?;
        }
        Ok(())
    }

    fn account(&mut self, now: f64) -> Result<(), EngineError> {
        let radius = self.config.world.ugv_radius;
        if self.step_index % self.pose_every == 0 {
            for i in 0..self.ugvs.len() {
                let u = &self.ugvs[i];
                let b = *u.nav.belief();
                let record = Record::UgvPose { t: now, ugv: i, truth: u.truth, belief: b.initialized.then_some(b), status: format!("{:?}", u.nav.status()) };
                self.log(record)?;
            }
            if let Some(uav) = &self.uav {
                let record = Record::UavPose { t: now, position: uav.state.position, velocity: uav.state.velocity };
                self.log(record)?;
            }
        }

        let mut failed = false;
        for i in 0..self.ugvs.len() {
            let p = self.ugvs[i].truth.position();
            let hit = self.scenario.obstacles.iter().position(|o| (o.center - p).norm() < o.radius + radius);
            if let Some(k) = hit {
                self.ugvs[i].collisions += 1;
                failed = true;
                let truth = self.ugvs[i].truth;
                self.log(Record::Collision { t: now, ugv: i, obstacle: k, truth })?;
            }
        }
        for a in 0..self.ugvs.len() {
            for b in a + 1..self.ugvs.len() {
                let d = (self.ugvs[a].truth.position() - self.ugvs[b].truth.position()).norm();
                let touching = d < 2.0 * radius;
                if touching && !self.ugvs[a].in_contact[b] {
                    self.ugv_contacts += 1;
                    self.log(Record::Contact { t: now, a, b })?;
                }
                self.ugvs[a].in_contact[b] = touching;
            }
        }
        for i in 0..self.ugvs.len() {
            let u = &mut self.ugvs[i];
            if u.reach_time.is_none() && !u.false_reach && u.nav.status() == NavStatus::Reached {
                let confirmed = (u.truth.position() - u.nav.goal).norm() <= self.config.goal_confirm;
                if confirmed {
                    u.reach_time = Some(now);
                } else {
                    u.false_reach = true;
                }
                self.log(Record::Reach { t: now, ugv: i, confirmed })?;
            }
        }

        if failed {
            self.status = Some(RunStatus::Failed);
        } else if self.ugvs.iter().all(|u| u.reach_time.is_some()) {
            self.status = Some(RunStatus::Complete);
        } else if self.ugvs.iter().any(|u| u.false_reach) {
            self.status = Some(RunStatus::Failed);
        } else if now >= self.config.time_cap - 1e-9 {
            self.status = Some(RunStatus::Timeout);
        }
        Ok(())
    }

    pub fn report(&self) -> MetricsReport {
        let dt = self.config.dt;
        MetricsReport {
            label: self.label.clone(),
            mode: self.mode,
            seed: self.scenario.seed,
            ugvs: self
                .ugvs
                .iter()
                .enumerate()
                .map(|(i, u)| UgvMetrics {
                    id: i,
                    reach_time: u.reach_time,
                    waiting_steps: u.waiting_steps,
                    waiting_time: u.waiting_steps as f64 * dt,
                    trajectory_length: u.length,
                    straight_line: (self.scenario.ugv_goals[i] - self.scenario.ugv_starts[i].position()).norm(),
                    collisions: u.collisions,
                    replans: u.nav.replans(),
                })
                .collect(),
            uav_trajectory_length: self.uav.as_ref().map_or(0.0, |u| u.length),
            collisions: self.ugvs.iter().map(|u| u.collisions).sum(),
            ugv_contacts: self.ugv_contacts,
            run_status: self.status.unwrap_or(RunStatus::Timeout),
            end_time: self.clock,
            reschedules: self.uav.as_ref().map_or(0, |u| u.scheduler.reschedules()),
        }
    }

    /// Steps to the end of the run, closes open waits and logs the final
    /// metrics. Returns the report and the trace digest.
    pub fn run(mut self) -> Result<(MetricsReport, String, GridMap), EngineError> {
        while self.status.is_none() {
            self.step()?;
        }
        let end = self.step_index + 1;
        for i in 0..self.ugvs.len() {
            if let Some(start) = self.ugvs[i].wait_started.take() {
                self.close_wait(i, start, end)?;
            }
        }
        let report = self.report();
        self.log(Record::End { t: self.clock, metrics: report.clone() })?;
        let map = self.final_map();
        let digest = self.trace.finish()?;
        Ok((report, digest, map))
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace_digest: String,
}

/// Runs one scenario. With `out_dir`, writes `<stem>.jsonl`, `<stem>.csv`
/// and `<stem>.pgm` there.
pub fn run_scenario(config: &SimConfig, scenario: &Scenario, mode: Mode, label: &str, out_dir: Option<&Path>) -> Result<RunOutput, EngineError> {
    let stem = format!("{label}_{}_seed{}", mode.name(), scenario.seed);
    let trace = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            TraceWriter::to_file(&dir.join(format!("{stem}.jsonl")))?
        }
        None => TraceWriter::detached(),
    };
    let sim = Simulation::new(config, scenario, mode, label, trace)?;
    let (report, trace_digest, map) = sim.run()?;
    if let Some(dir) = out_dir {
        std::fs::write(dir.join(format!("{stem}.csv")), crate::metrics::metrics_csv([&report]))?;
        std::fs::write(dir.join(format!("{stem}.pgm")), crate::pgm::render_pgm(&map))?;
    }
    Ok(RunOutput { report, trace_digest })
}

pub fn run_baseline_self_perception(config: &SimConfig, scenario: &Scenario, label: &str, out_dir: Option<&Path>) -> Result<RunOutput, EngineError> {
    run_scenario(config, scenario, Mode::SelfPerception, label, out_dir)
}

pub fn run_ablation(config: &SimConfig, scenario: &Scenario, mode: Mode, label: &str, out_dir: Option<&Path>) -> Result<RunOutput, EngineError> {
    assert!(Mode::ABLATIONS.contains(&mode), "{mode:?} is not an ablation");
    run_scenario(config, scenario, mode, label, out_dir)
}
