//! Environment representation: the tri-state occupancy grid, disk-obstacle
//! scenarios and their seeded generation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2};
use crate::rng::RngStream;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("point ({x:.3}, {y:.3}) lies outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell ({ix}, {iy}) lies outside the map")]
    CellOutOfBounds { ix: i64, iy: i64 },
    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Integer cell coordinates. Flat addresses are row-major: `iy * width + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: usize,
    pub iy: usize,
}

impl CellIndex {
    pub fn new(ix: usize, iy: usize) -> Self {
        Self { ix, iy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub resolution: f64,
    pub origin: Point2,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(resolution: f64, origin: Point2, width: usize, height: usize) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        Self { resolution, origin, width, height }
    }

    /// Smallest grid covering `extent` meters from the origin.
    pub fn covering(resolution: f64, origin: Point2, extent: Point2) -> Self {
        let w = (extent.x / resolution - 1e-9).ceil().max(1.0) as usize;
        let h = (extent.y / resolution - 1e-9).ceil().max(1.0) as usize;
        Self::new(resolution, origin, w, h)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, cell: CellIndex) -> usize {
        cell.iy * self.width + cell.ix
    }

    pub fn unflat(&self, idx: usize) -> CellIndex {
        CellIndex::new(idx % self.width, idx / self.width)
    }

    pub fn contains_cell(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    /// Signed floor-quantized cell coordinates, without bounds checking.
    pub fn quantize(&self, p: &Point2) -> (i64, i64) {
        let q = (p - self.origin) / self.resolution;
        (q.x.floor() as i64, q.y.floor() as i64)
    }

    pub fn world_to_grid(&self, p: &Point2) -> Result<CellIndex, WorldError> {
        let (ix, iy) = self.quantize(p);
        if p.x.is_finite() && p.y.is_finite() && self.contains_cell(ix, iy) {
            Ok(CellIndex::new(ix as usize, iy as usize))
        } else {
            Err(WorldError::OutOfBounds { x: p.x, y: p.y })
        }
    }

    /// World coordinates of the cell center.
    pub fn grid_to_world(&self, cell: CellIndex) -> Point2 {
        self.origin + Point2::new(cell.ix as f64 + 0.5, cell.iy as f64 + 0.5) * self.resolution
    }

    pub fn checked_cell(&self, ix: i64, iy: i64) -> Result<CellIndex, WorldError> {
        if self.contains_cell(ix, iy) {
            Ok(CellIndex::new(ix as usize, iy as usize))
        } else {
            Err(WorldError::CellOutOfBounds { ix, iy })
        }
    }
}

/// One state transition of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellChange {
    pub index: usize,
    pub from: CellState,
    pub to: CellState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    geometry: GridGeometry,
    cells: Vec<CellState>,
}

impl GridMap {
    /// A new all-Unknown map.
    pub fn new(geometry: GridGeometry) -> Self {
        Self { geometry, cells: vec![CellState::Unknown; geometry.len()] }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn world_to_grid(&self, p: &Point2) -> Result<CellIndex, WorldError> {
        self.geometry.world_to_grid(p)
    }

    pub fn grid_to_world(&self, cell: CellIndex) -> Point2 {
        self.geometry.grid_to_world(cell)
    }

    pub fn get(&self, cell: CellIndex) -> CellState {
        self.cells[self.geometry.flat(cell)]
    }

    pub fn get_flat(&self, idx: usize) -> CellState {
        self.cells[idx]
    }

    /// Sets a cell and reports the transition if the state changed.
    pub fn set_flat(&mut self, idx: usize, state: CellState) -> Option<CellChange> {
        let from = std::mem::replace(&mut self.cells[idx], state);
        (from != state).then_some(CellChange { index: idx, from, to: state })
    }

    pub fn set(&mut self, cell: CellIndex, state: CellState) -> Option<CellChange> {
        self.set_flat(self.geometry.flat(cell), state)
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Point2,
    pub radius: f64,
}

impl Obstacle {
    /// Boundary counts as inside.
    pub fn contains(&self, p: &Point2) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub extent: Point2,
    pub obstacles: Vec<Obstacle>,
    pub ugv_starts: Vec<Pose2>,
    pub ugv_goals: Vec<Point2>,
    pub uav_start: Pose2,
    pub seed: u64,
}

impl Scenario {
    pub fn ugv_count(&self) -> usize {
        self.ugv_starts.len()
    }

    pub fn in_extent(&self, p: &Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.extent.x && p.y <= self.extent.y
    }

    /// Checks the scenario invariants for a robot of radius `clearance`.
    pub fn validate(&self, clearance: f64) -> Result<(), WorldError> {
        if !(self.extent.x > 0.0 && self.extent.y > 0.0) {
            return Err(WorldError::InvalidScenario("extent must be positive".into()));
        }
        if self.ugv_starts.is_empty() || self.ugv_starts.len() != self.ugv_goals.len() {
            return Err(WorldError::InvalidScenario("need matching, nonempty start and goal lists".into()));
        }
        let points = self
            .ugv_starts
            .iter()
            .map(|s| s.position())
            .chain(self.ugv_goals.iter().copied())
            .chain(std::iter::once(self.uav_start.position()));
        for p in points {
            if !self.in_extent(&p) {
                return Err(WorldError::InvalidScenario(format!("({:.2}, {:.2}) outside extent", p.x, p.y)));
            }
        }
        for p in self.ugv_starts.iter().map(|s| s.position()).chain(self.ugv_goals.iter().copied()) {
            if self.obstacles.iter().any(|o| (p - o.center).norm() <= o.radius + clearance) {
                return Err(WorldError::InvalidScenario(format!(
                    "({:.2}, {:.2}) inside an inflated obstacle",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::InvalidScenario(e.to_string()))
    }
}

/// True iff `p` lies inside (or on) any obstacle footprint.
pub fn ground_truth_occupied(scenario: &Scenario, p: &Point2) -> bool {
    scenario.obstacles.iter().any(|o| o.contains(p))
}

/// Layout knobs for [`generate_scenario_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLayout {
    pub obstacle_radius: (f64, f64),
    pub ugv_radius: f64,
    /// Obstacle-free strip along x = 0 where UGVs and the UAV start.
    pub staging_width: f64,
    /// Minimum number of start/goal slots; obstacles are placed against all
    /// slots so the same seed yields the same obstacles for any UGV count.
    pub min_slots: usize,
    pub start_spacing: f64,
    /// Clearance between any obstacle boundary and a goal.
    pub goal_clearance: f64,
    /// Robot inflation used to verify every goal is reachable.
    pub connectivity_inflation: f64,
    pub resolution: f64,
    pub retry_budget: usize,
}

impl Default for ScenarioLayout {
    fn default() -> Self {
        Self {
            obstacle_radius: (0.3, 0.8),
            ugv_radius: 0.3,
            staging_width: 3.5,
            min_slots: 7,
            start_spacing: 1.2,
            goal_clearance: 1.0,
            connectivity_inflation: 0.8,
            resolution: 0.1,
            retry_budget: 1000,
        }
    }
}

pub fn generate_scenario(seed: u64, extent: Point2, obstacle_count: usize, ugv_count: usize) -> Result<Scenario, WorldError> {
    generate_scenario_with(&ScenarioLayout::default(), seed, extent, obstacle_count, ugv_count)
}

/// Slot indices used by `ugv_count` robots out of `slots`: a contiguous
/// block around the middle slot, so adding robots widens the team.
fn slot_selection(slots: usize, ugv_count: usize) -> Vec<usize> {
    let first = (slots - ugv_count) / 2;
    (first..first + ugv_count).collect()
}

pub fn generate_scenario_with(
    layout: &ScenarioLayout,
    seed: u64,
    extent: Point2,
    obstacle_count: usize,
    ugv_count: usize,
) -> Result<Scenario, WorldError> {
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(WorldError::InvalidScenario("extent must be positive".into()));
    }
    if ugv_count == 0 {
        return Err(WorldError::InvalidScenario("at least one UGV is required".into()));
    }
    let mut rng = RngStream::new(seed, "scenario");
    let slots = ugv_count.max(layout.min_slots);
    let cy = extent.y / 2.0;
    let x_start = (layout.staging_width * 0.43).min(extent.x / 4.0);

    let span = (slots - 1) as f64 * layout.start_spacing;
    if span + 2.0 * layout.ugv_radius > extent.y {
        return Err(WorldError::PlacementInfeasible(format!("{slots} start slots do not fit in {:.1} m", extent.y)));
    }
    let starts: Vec<Pose2> = (0..slots)
        .map(|j| {
            let y = cy - span / 2.0 + j as f64 * layout.start_spacing + rng.uniform(-0.15, 0.15);
            let x = x_start + rng.uniform(-0.3, 0.3);
            Pose2::new(x, y, 0.0)
        })
        .collect();

    let goal_margin = 1.5_f64.min(extent.y / 4.0);
    let stratum = (extent.y - 2.0 * goal_margin) / slots as f64;
    let goal_x = (extent.x - 2.0).max(extent.x * 0.75);
    let goals: Vec<Point2> = (0..slots)
        .map(|j| {
            let y = goal_margin + (j as f64 + rng.uniform(0.2, 0.8)) * stratum;
            Point2::new(goal_x + rng.uniform(-0.5, 0.5).min(extent.x - goal_x - 0.5), y)
        })
        .collect();

    let uav_start = Pose2::new(x_start + 1.5, cy, 0.0);

    let geometry = GridGeometry::covering(layout.resolution, Point2::zeros(), extent);
    let mut reach = ReachabilityGrid::new(geometry, layout.connectivity_inflation);
    let anchors: Vec<usize> = starts
        .iter()
        .map(|s| s.position())
        .chain(goals.iter().copied())
        .map(|p| geometry.flat(geometry.world_to_grid(&p).expect("slot inside extent")))
        .collect();

    let (r_lo, r_hi) = layout.obstacle_radius;
    let mut obstacles = Vec::with_capacity(obstacle_count);
    for k in 0..obstacle_count {
        let mut placed = false;
        for _ in 0..layout.retry_budget {
            let radius = rng.uniform(r_lo, r_hi);
            let center = Point2::new(rng.uniform(0.0, extent.x), rng.uniform(0.0, extent.y));
            let obstacle = Obstacle { center, radius };
            if center.x - radius < layout.staging_width {
                continue;
            }
            if goals.iter().any(|g| (g - center).norm() < radius + layout.goal_clearance) {
                continue;
            }
            let stamp = reach.add(&obstacle);
            if reach.connected(&anchors) {
                obstacles.push(obstacle);
                placed = true;
                break;
            }
            reach.remove(&stamp);
        }
        if !placed {
            return Err(WorldError::PlacementInfeasible(format!(
                "obstacle {k} could not be placed within {} attempts",
                layout.retry_budget
            )));
        }
    }

    let picked = slot_selection(slots, ugv_count);
    let scenario = Scenario {
        extent,
        obstacles,
        ugv_starts: picked.iter().map(|&j| starts[j]).collect(),
        ugv_goals: picked.iter().map(|&j| goals[j]).collect(),
        uav_start,
        seed,
    };
    scenario.validate(layout.ugv_radius)?;
    Ok(scenario)
}

/// Blocked-count raster of inflated obstacles with a flood-fill connectivity test.
struct ReachabilityGrid {
    geometry: GridGeometry,
    inflation: f64,
    blocked: Vec<u16>,
}

impl ReachabilityGrid {
    fn new(geometry: GridGeometry, inflation: f64) -> Self {
        Self { geometry, inflation, blocked: vec![0; geometry.len()] }
    }

    fn footprint(&self, o: &Obstacle) -> Vec<usize> {
        let g = &self.geometry;
        let r = o.radius + self.inflation;
        let (x0, y0) = g.quantize(&(o.center - Point2::new(r, r)));
        let (x1, y1) = g.quantize(&(o.center + Point2::new(r, r)));
        let mut cells = Vec::new();
        for iy in y0.max(0)..=y1.min(g.height as i64 - 1) {
            for ix in x0.max(0)..=x1.min(g.width as i64 - 1) {
                let c = CellIndex::new(ix as usize, iy as usize);
                if (g.grid_to_world(c) - o.center).norm() <= r {
                    cells.push(g.flat(c));
                }
            }
        }
        cells
    }

    fn add(&mut self, o: &Obstacle) -> Vec<usize> {
        let cells = self.footprint(o);
        for &c in &cells {
            self.blocked[c] += 1;
        }
        cells
    }

    fn remove(&mut self, cells: &[usize]) {
        for &c in cells {
            self.blocked[c] -= 1;
        }
    }

    fn connected(&self, anchors: &[usize]) -> bool {
        if anchors.iter().any(|&a| self.blocked[a] > 0) {
            return false;
        }
        let g = &self.geometry;
        let mut seen = vec![false; g.len()];
        let mut queue = VecDeque::from([anchors[0]]);
        seen[anchors[0]] = true;
        while let Some(idx) = queue.pop_front() {
            let c = g.unflat(idx);
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (c.ix as i64 + dx, c.iy as i64 + dy);
                if !g.contains_cell(nx, ny) {
                    continue;
                }
                let n = g.flat(CellIndex::new(nx as usize, ny as usize));
                if !seen[n] && self.blocked[n] == 0 {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        anchors.iter().all(|&a| seen[a])
    }
}
