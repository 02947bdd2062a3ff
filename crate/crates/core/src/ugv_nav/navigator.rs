//! Per-UGV navigation state: local map, pose filter, current plan and the
//! published collision request.

use serde::{Deserialize, Serialize};

use crate::estimation::{Belief, EstimationError, NoiseModel, PoseFilter};
use crate::geometry::{point_segment_distance, Point2};
use crate::mapsync::{merge_map_patch, MapPatch, MapSyncError, Traversability, TraversabilityIndex, TraversabilityView};
use crate::sensors::{ControlSample, RpeMeasurement};
use crate::world::{GridGeometry, GridMap};

use super::collision::{predict_collision, recovery_run, sigma_ellipse, propagate_uncertainty, wait_guard, CollisionInfo, MotionMode};
use super::planner::{nearest_passable, plan_path, segment_clear, smooth_path, Walled};
use super::profile::{profile_trajectory, MotionLimits, PlannedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub limits: MotionLimits,
    pub dt: f64,
    /// Robot footprint plus quantization allowance, used for collision checks.
    pub collision_inflation: f64,
    /// Planning clearance; falls back to `fallback_inflation` when no route exists.
    pub planning_inflation: f64,
    pub fallback_inflation: f64,
    pub replan_period: f64,
    pub prediction_interval: f64,
    pub horizon: f64,
    pub setback: f64,
    pub t_c: f64,
    pub goal_tolerance: f64,
    /// Largest 3σ semi-axis accepted when declaring arrival; above it the UGV
    /// holds at the goal and asks for a fix. Ignored without `use_uncertainty`.
    pub goal_sigma3: f64,
    /// Radius searched for a passable start cell when the belief sits inside inflation.
    pub start_escape_radius: f64,
    /// Travel over which an overlap at the current pose is tolerated while
    /// the mean stays on passable cells, so a UGV that drifted close to an
    /// obstacle can back out of it instead of waiting forever.
    pub recovery_distance: f64,
    /// When false, collision prediction checks the mean position only.
    pub use_uncertainty: bool,
    /// When false, measurements after initialization are ignored.
    pub use_rpe_updates: bool,
    /// When false, the UGV never stops for a predicted collision.
    pub use_wait_guard: bool,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            limits: MotionLimits::default(),
            dt: 0.05,
            collision_inflation: 0.4,
            planning_inflation: 0.75,
            fallback_inflation: 0.6,
            replan_period: 0.5,
            prediction_interval: 0.2,
            horizon: 8.0,
            setback: 1.5,
            t_c: 0.4,
            goal_tolerance: 0.3,
            goal_sigma3: 0.2,
            start_escape_radius: 1.0,
            recovery_distance: 0.5,
            use_uncertainty: true,
            use_rpe_updates: true,
            use_wait_guard: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavStatus {
    Uninitialized,
    Driving,
    Waiting,
    NoRoute,
    Reached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavOutput {
    pub mode: MotionMode,
    /// Request to publish this step; `None` withdraws any earlier one.
    pub request: Option<CollisionInfo>,
}

#[derive(Debug, Clone)]
pub struct UgvNavigator {
    pub id: usize,
    pub goal: Point2,
    nominal_start: Point2,
    config: NavConfig,
    map: GridMap,
    collision_index: TraversabilityIndex,
    planning_index: TraversabilityIndex,
    fallback_index: TraversabilityIndex,
    filter: PoseFilter,
    noise: NoiseModel,
    polyline: Vec<Point2>,
    trajectory: Option<PlannedTrajectory>,
    cursor: usize,
    last_speed: f64,
    prediction: Option<CollisionInfo>,
    last_plan: f64,
    map_dirty: bool,
    belief_dirty: bool,
    status: NavStatus,
    replans: u64,
}

impl UgvNavigator {
    pub fn new(id: usize, nominal_start: Point2, goal: Point2, geometry: GridGeometry, config: NavConfig, noise: NoiseModel) -> Self {
        let map = GridMap::new(geometry);
        let mut filter = PoseFilter::new(noise);
        filter.updates_enabled = config.use_rpe_updates;
        Self {
            id,
            goal,
            nominal_start,
            collision_index: TraversabilityIndex::build(&map, config.collision_inflation),
            planning_index: TraversabilityIndex::build(&map, config.planning_inflation),
            fallback_index: TraversabilityIndex::build(&map, config.fallback_inflation),
            map,
            config,
            filter,
            noise,
            polyline: Vec::new(),
            trajectory: None,
            cursor: 0,
            last_speed: 0.0,
            prediction: None,
            last_plan: f64::NEG_INFINITY,
            map_dirty: false,
            belief_dirty: false,
            status: NavStatus::Uninitialized,
            replans: 0,
        }
    }

    pub fn belief(&self) -> &Belief {
        self.filter.belief()
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn status(&self) -> NavStatus {
        self.status
    }

    pub fn trajectory(&self) -> Option<&PlannedTrajectory> {
        self.trajectory.as_ref()
    }

    pub fn polyline(&self) -> &[Point2] {
        &self.polyline
    }

    pub fn replans(&self) -> u64 {
        self.replans
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    /// Control for this step. Advances the plan cursor when moving.
    pub fn take_command(&mut self) -> ControlSample {
        if self.status != NavStatus::Driving {
            self.last_speed = 0.0;
            return ControlSample::default();
        }
        let u = self.trajectory.as_ref().and_then(|t| t.controls.get(self.cursor)).copied();
        match u {
            Some(u) => {
                self.cursor += 1;
                self.last_speed = self.trajectory.as_ref().unwrap().waypoints[self.cursor].speed;
                u
            }
            None => {
                self.last_speed = 0.0;
                ControlSample::default()
            }
        }
    }

    pub fn predict(&mut self, odometry: &ControlSample, dt: f64) {
        self.filter.predict(odometry, dt);
    }

    pub fn receive_rpe(&mut self, z: &RpeMeasurement) -> Result<bool, EstimationError> {
        let changed = self.filter.observe(z)?;
        self.belief_dirty |= changed;
        Ok(changed)
    }

    /// Merges a patch; returns the number of cells that changed.
    pub fn receive_patch(&mut self, patch: &MapPatch) -> Result<usize, MapSyncError> {
        let changes = merge_map_patch(&mut self.map, patch)?;
        if !changes.is_empty() {
            self.collision_index.apply(&changes);
            self.planning_index.apply(&changes);
            self.fallback_index.apply(&changes);
            self.map_dirty = true;
        }
        Ok(changes.len())
    }

    /// Replans and re-predicts as due, then applies the wait guard.
    pub fn update(&mut self, now: f64) -> NavOutput {
        if self.status == NavStatus::Reached {
            return NavOutput { mode: MotionMode::Proceed, request: None };
        }
        if !self.filter.is_initialized() {
            return self.standing(now, self.nominal_start, self.nominal_start, NavStatus::Uninitialized);
        }
        let position = self.belief().mean.position();
        if (position - self.goal).norm() < self.config.goal_tolerance {
            if self.config.use_uncertainty && !self.goal_certain() {
                self.trajectory = None;
                self.prediction = None;
                return self.standing(now, self.goal, self.goal, NavStatus::Waiting);
            }
            self.status = NavStatus::Reached;
            self.trajectory = None;
            self.prediction = None;
            return NavOutput { mode: MotionMode::Proceed, request: None };
        }

        let due = now - self.last_plan >= self.config.replan_period - 1e-9;
        let mut replan = self.trajectory.is_none() || due;
        if !replan && self.map_dirty {
            let view = Walled::new(self.planning_index.view(TraversabilityView::PlanningView), self.planning_index.inflation());
            let rest = self.remaining_polyline(&position);
            replan = !rest.windows(2).skip(1).all(|w| segment_clear(&view, &w[0], &w[1]));
        }
        if replan {
            self.plan(now);
        } else if self.map_dirty || self.belief_dirty {
            self.reprofile(now);
        }
        self.map_dirty = false;
        self.belief_dirty = false;

        if self.trajectory.is_none() {
            return self.standing(now, position, position, NavStatus::NoRoute);
        }
        let mode = if self.config.use_wait_guard {
            wait_guard(now, self.prediction.as_ref(), self.config.t_c)
        } else {
            MotionMode::Proceed
        };
        self.status = match mode {
            MotionMode::Proceed => NavStatus::Driving,
            MotionMode::StopAndWait => NavStatus::Waiting,
        };
        let request = self.prediction.map(|p| match mode {
            MotionMode::Proceed => p,
            MotionMode::StopAndWait => CollisionInfo { t_pc: now + self.config.t_c, issued_at: now, ..p },
        });
        NavOutput { mode, request }
    }

    fn goal_certain(&self) -> bool {
        sigma_ellipse(&self.belief().position_cov()).is_ok_and(|e| e.a <= self.config.goal_sigma3)
    }

    fn standing(&mut self, now: f64, p_ps: Point2, p_pc: Point2, status: NavStatus) -> NavOutput {
        self.status = status;
        let info = CollisionInfo { ugv_id: self.id, p_ps, t_pc: now + self.config.t_c, p_pc, issued_at: now };
        NavOutput { mode: MotionMode::StopAndWait, request: Some(info) }
    }

    /// `[position, vertices not yet passed..]` of the current polyline.
    fn remaining_polyline(&self, position: &Point2) -> Vec<Point2> {
        let mut out = vec![*position];
        if self.polyline.len() < 2 {
            out.extend(self.polyline.last());
            return out;
        }
        let nearest = (0..self.polyline.len() - 1)
            .min_by(|&i, &j| {
                let di = point_segment_distance(position, &self.polyline[i], &self.polyline[i + 1]);
                let dj = point_segment_distance(position, &self.polyline[j], &self.polyline[j + 1]);
                di.total_cmp(&dj)
            })
            .unwrap();
        out.extend_from_slice(&self.polyline[nearest + 1..]);
        out
    }

    fn route(&self, index: &TraversabilityIndex, start: &Point2) -> Option<Vec<Point2>> {
        let view = Walled::new(index.view(TraversabilityView::PlanningView), index.inflation());
        let from = if view.passable_point(start) {
            *start
        } else {
            nearest_passable(&view, start, self.config.start_escape_radius)?
        };
        let cells = plan_path(&view, &from, &self.goal).ok()?;
        let mut line = smooth_path(&view, &from, &cells, &self.goal);
        if from != *start {
            line.insert(0, *start);
        }
        Some(line)
    }

    fn plan(&mut self, now: f64) {
        self.last_plan = now;
        self.replans += 1;
        let start = self.belief().mean.position();
        let line = self.route(&self.planning_index, &start).or_else(|| self.route(&self.fallback_index, &start));
        match line {
            Some(line) => {
                self.polyline = line;
                self.reprofile(now);
            }
            None => {
                self.polyline.clear();
                self.trajectory = None;
                self.prediction = None;
            }
        }
    }

    fn reprofile(&mut self, now: f64) {
        if self.polyline.is_empty() {
            return;
        }
        let b = *self.belief();
        let rest = self.remaining_polyline(&b.mean.position());
        let v0 = if self.status == NavStatus::Driving { self.last_speed } else { 0.0 };
        let traj = profile_trajectory(&rest, b.mean.theta, v0, &self.config.limits, self.config.dt);
        self.trajectory = Some(traj);
        self.cursor = 0;
        self.predict_collision(now);
    }

    fn predict_collision(&mut self, now: f64) {
        let Some(traj) = &self.trajectory else {
            self.prediction = None;
            return;
        };
        let (b, noise) = if self.config.use_uncertainty {
            (*self.belief(), self.noise)
        } else {
            (Belief { cov: nalgebra::Matrix3::zeros(), ..*self.belief() }, NoiseModel::zero())
        };
        let every = (self.config.prediction_interval / self.config.dt).round().max(1.0) as usize;
        let beliefs = propagate_uncertainty(&b, traj, self.cursor, self.config.horizon, &noise, every).expect("initialized belief");
        let cp = self.collision_index.view(TraversabilityView::CollisionView);
        let skip = recovery_run(&beliefs, &cp, self.config.recovery_distance);
        self.prediction = predict_collision(
            self.id,
            &beliefs[skip..],
            &cp,
            &self.planning_index.view(TraversabilityView::PlanningView),
            self.config.setback,
            now,
            self.config.dt,
        );
    }
}
