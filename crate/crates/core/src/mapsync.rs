//! Occupancy mapping from scans, address-list map patches, and the two
//! traversability views over a tri-state map.
//!
//! A patch carries only the addresses of Occupied and Unknown cells inside a
//! square region; every other cell of the region is Free by omission. The
//! binary wire layout (all little-endian) is:
//!
//! ```text
//! magic  b"MPCH"   version u8 = 1
//! f64 resolution, f64 origin_x, f64 origin_y, u32 width, u32 height
//! f64 center_x, f64 center_y, f64 half_extent
//! u32 n_occupied, n_occupied × u32 address (ascending)
//! u32 n_unknown,  n_unknown  × u32 address (ascending)
//! ```
//!
//! Addresses are row-major flat indices over the shared global grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::sensors::Scan;
use crate::world::{CellChange, CellIndex, CellState, GridGeometry, GridMap, WorldError};

#[derive(Debug, Error, PartialEq)]
pub enum MapSyncError {
    #[error("patch region does not overlap the map")]
    RegionDisjoint,
    #[error("patch geometry does not match the local map")]
    GeometryMismatch,
    #[error("malformed patch: {0}")]
    Malformed(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Cells visited by a straight ray from `from` to `to`, in order, as flat
/// indices. Traversal stops at the map edge.
pub fn traverse_ray(geometry: &GridGeometry, from: &Point2, to: &Point2) -> Vec<usize> {
    let (mut ix, mut iy) = geometry.quantize(from);
    let (ex, ey) = geometry.quantize(to);
    let mut cells = Vec::new();
    if !geometry.contains_cell(ix, iy) {
        return cells;
    }
    let d = to - from;
    let res = geometry.resolution;
    let rel = (from - geometry.origin) / res;
    let axis = |delta: f64, pos: f64, cell: i64| -> (i64, f64, f64) {
        if delta > 0.0 {
            (1, ((cell + 1) as f64 - pos) * res / delta, res / delta)
        } else if delta < 0.0 {
            (-1, (pos - cell as f64) * res / -delta, res / -delta)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, dtx) = axis(d.x, rel.x, ix);
    let (sy, mut ty, dty) = axis(d.y, rel.y, iy);
    loop {
        cells.push(geometry.flat(CellIndex::new(ix as usize, iy as usize)));
        if (ix, iy) == (ex, ey) || tx.min(ty) > 1.0 {
            break;
        }
        if tx < ty {
            ix += sx;
            tx += dtx;
        } else {
            iy += sy;
            ty += dty;
        }
        if !geometry.contains_cell(ix, iy) {
            break;
        }
    }
    cells
}

/// Writes one scan into the map. Cells crossed before a beam's end become
/// Free, a hit cell inside the map becomes Occupied, and Occupied is never demoted.
pub fn integrate_scan(map: &mut GridMap, scan: &Scan) -> Result<Vec<CellChange>, MapSyncError> {
    let origin = scan.pose.position();
    map.world_to_grid(&origin)?;
    let geometry = *map.geometry();
    let mut changes = Vec::new();
    for beam in &scan.beams {
        let heading = scan.pose.theta + beam.azimuth;
        let end = origin + Point2::new(heading.cos(), heading.sin()) * beam.range;
        let cells = traverse_ray(&geometry, &origin, &end);
        let last = cells.len().saturating_sub(1);
        // a ray leaving the map before its hit must not paint the edge cell
        let (ex, ey) = geometry.quantize(&end);
        let hit_cell = (beam.hit && geometry.contains_cell(ex, ey)).then(|| geometry.flat(CellIndex::new(ex as usize, ey as usize)));
        for (k, &idx) in cells.iter().enumerate() {
            let target = if k == last && hit_cell == Some(idx) { CellState::Occupied } else { CellState::Free };
            if map.get_flat(idx) == CellState::Occupied || map.get_flat(idx) == target {
                continue;
            }
            changes.extend(map.set_flat(idx, target));
        }
    }
    Ok(changes)
}

/// Inclusive-exclusive cell bounds `(x0, x1, y0, y1)` of a square region,
/// clipped to the map. The region spans `round(2 * half_extent / res)` cells
/// per side around the cell containing `center`.
pub fn patch_region(geometry: &GridGeometry, center: &Point2, half_extent: f64) -> Option<(usize, usize, usize, usize)> {
    let n = ((2.0 * half_extent / geometry.resolution).round() as i64).max(1);
    let (cx, cy) = geometry.quantize(center);
    let (x0, y0) = (cx - n / 2, cy - n / 2);
    let (x1, y1) = (x0 + n, y0 + n);
    let clip = |lo: i64, hi: i64, max: usize| (lo.max(0), hi.min(max as i64));
    let (x0, x1) = clip(x0, x1, geometry.width);
    let (y0, y1) = clip(y0, y1, geometry.height);
    (x0 < x1 && y0 < y1).then_some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPatch {
    pub geometry: GridGeometry,
    pub center: Point2,
    pub half_extent: f64,
    pub occupied: Vec<u32>,
    pub unknown: Vec<u32>,
}

const PATCH_MAGIC: &[u8; 4] = b"MPCH";
const PATCH_VERSION: u8 = 1;

impl MapPatch {
    pub fn region_cell_count(&self) -> usize {
        patch_region(&self.geometry, &self.center, self.half_extent)
            .map_or(0, |(x0, x1, y0, y1)| (x1 - x0) * (y1 - y0))
    }

    pub fn address_count(&self) -> usize {
        self.occupied.len() + self.unknown.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(64 + 4 * self.address_count());
        out.extend_from_slice(PATCH_MAGIC);
        out.push(PATCH_VERSION);
        for v in [g.resolution, g.origin.x, g.origin.y] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(g.width as u32).to_le_bytes());
        out.extend_from_slice(&(g.height as u32).to_le_bytes());
        for v in [self.center.x, self.center.y, self.half_extent] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for list in [&self.occupied, &self.unknown] {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for a in list {
                out.extend_from_slice(&a.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MapSyncError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != PATCH_MAGIC {
            return Err(MapSyncError::Malformed("bad magic".into()));
        }
        if r.take(1)?[0] != PATCH_VERSION {
            return Err(MapSyncError::Malformed("unsupported version".into()));
        }
        let (res, ox, oy) = (r.f64()?, r.f64()?, r.f64()?);
        let (w, h) = (r.u32()? as usize, r.u32()? as usize);
        if !(res > 0.0) {
            return Err(MapSyncError::Malformed("non-positive resolution".into()));
        }
        let geometry = GridGeometry::new(res, Point2::new(ox, oy), w, h);
        let center = Point2::new(r.f64()?, r.f64()?);
        let half_extent = r.f64()?;
        let mut lists = [Vec::new(), Vec::new()];
        for list in &mut lists {
            let n = r.u32()? as usize;
            *list = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
        }
        if r.pos != bytes.len() {
            return Err(MapSyncError::Malformed("trailing bytes".into()));
        }
        let [occupied, unknown] = lists;
        let patch = Self { geometry, center, half_extent, occupied, unknown };
        patch.check()?;
        Ok(patch)
    }

    /// Address lists sorted, disjoint, and inside the region.
    pub fn check(&self) -> Result<(), MapSyncError> {
        let (x0, x1, y0, y1) =
            patch_region(&self.geometry, &self.center, self.half_extent).ok_or(MapSyncError::RegionDisjoint)?;
        for list in [&self.occupied, &self.unknown] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MapSyncError::Malformed("addresses not strictly ascending".into()));
            }
            for &a in list {
                if a as usize >= self.geometry.len() {
                    return Err(MapSyncError::Malformed(format!("address {a} outside map")));
                }
                let c = self.geometry.unflat(a as usize);
                if c.ix < x0 || c.ix >= x1 || c.iy < y0 || c.iy >= y1 {
                    return Err(MapSyncError::Malformed(format!("address {a} outside region")));
                }
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < self.occupied.len() && j < self.unknown.len() {
            match self.occupied[i].cmp(&self.unknown[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return Err(MapSyncError::Malformed("address in both lists".into())),
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MapSyncError> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| MapSyncError::Malformed("truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, MapSyncError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, MapSyncError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn encode_map_patch(map: &GridMap, center: &Point2, half_extent: f64) -> Result<MapPatch, MapSyncError> {
    let geometry = *map.geometry();
    let (x0, x1, y0, y1) = patch_region(&geometry, center, half_extent).ok_or(MapSyncError::RegionDisjoint)?;
    let mut occupied = Vec::new();
    let mut unknown = Vec::new();
    for iy in y0..y1 {
        for ix in x0..x1 {
            let idx = geometry.flat(CellIndex::new(ix, iy));
            match map.get_flat(idx) {
                CellState::Occupied => occupied.push(idx as u32),
                CellState::Unknown => unknown.push(idx as u32),
                CellState::Free => {}
            }
        }
    }
    Ok(MapPatch { geometry, center: *center, half_extent, occupied, unknown })
}

/// Overwrites the patch region of `local`: listed cells take their listed
/// state, all other region cells become Free. Cells outside the region are
/// untouched. Received regions are kept indefinitely.
pub fn merge_map_patch(local: &mut GridMap, patch: &MapPatch) -> Result<Vec<CellChange>, MapSyncError> {
    if *local.geometry() != patch.geometry {
        return Err(MapSyncError::GeometryMismatch);
    }
    patch.check()?;
    let geometry = patch.geometry;
    let (x0, x1, y0, y1) =
        patch_region(&geometry, &patch.center, patch.half_extent).ok_or(MapSyncError::RegionDisjoint)?;
    let mut occ = patch.occupied.iter().peekable();
    let mut unk = patch.unknown.iter().peekable();
    let mut changes = Vec::new();
    for iy in y0..y1 {
        for ix in x0..x1 {
            let idx = geometry.flat(CellIndex::new(ix, iy));
            let state = if occ.next_if(|&&a| a as usize == idx).is_some() {
                CellState::Occupied
            } else if unk.next_if(|&&a| a as usize == idx).is_some() {
                CellState::Unknown
            } else {
                CellState::Free
            };
            changes.extend(local.set_flat(idx, state));
        }
    }
    Ok(changes)
}

/// How Unknown cells are treated when deciding traversability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraversabilityView {
    /// Optimistic planning view: Unknown is traversable.
    PlanningView,
    /// Pessimistic collision-prediction view: Unknown is blocked.
    CollisionView,
}

impl TraversabilityView {
    pub fn blocks(self, state: CellState) -> bool {
        match state {
            CellState::Occupied => true,
            CellState::Free => false,
            CellState::Unknown => self == TraversabilityView::CollisionView,
        }
    }
}

/// Cell offsets whose centers lie within `inflation` meters of the origin cell center.
pub fn disk_offsets(inflation: f64, resolution: f64) -> Vec<(i64, i64)> {
    let r = inflation / resolution;
    let reach = r.floor() as i64;
    let limit = r * r + 1e-9;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if (dx * dx + dy * dy) as f64 <= limit {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Direct evaluation: a cell is blocked if any cell within `inflation` of it
/// is blocked under `view`.
pub fn is_traversable(map: &GridMap, cell: CellIndex, view: TraversabilityView, inflation: f64) -> Result<bool, MapSyncError> {
    let g = map.geometry();
    g.checked_cell(cell.ix as i64, cell.iy as i64)?;
    for (dx, dy) in disk_offsets(inflation, g.resolution) {
        let (nx, ny) = (cell.ix as i64 + dx, cell.iy as i64 + dy);
        if g.contains_cell(nx, ny) && view.blocks(map.get(CellIndex::new(nx as usize, ny as usize))) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Read-only traversability query used by planners and collision checks.
pub trait Traversability {
    fn geometry(&self) -> &GridGeometry;
    fn passable(&self, idx: usize) -> bool;

    fn passable_point(&self, p: &Point2) -> bool {
        self.geometry().world_to_grid(p).map(|c| self.passable(self.geometry().flat(c))).unwrap_or(false)
    }
}

/// Brute-force traversability straight off a [`GridMap`].
pub struct DirectView<'a> {
    pub map: &'a GridMap,
    pub view: TraversabilityView,
    offsets: Vec<(i64, i64)>,
}

impl<'a> DirectView<'a> {
    pub fn new(map: &'a GridMap, view: TraversabilityView, inflation: f64) -> Self {
        Self { map, view, offsets: disk_offsets(inflation, map.geometry().resolution) }
    }
}

impl Traversability for DirectView<'_> {
    fn geometry(&self) -> &GridGeometry {
        self.map.geometry()
    }

    fn passable(&self, idx: usize) -> bool {
        let g = self.map.geometry();
        let c = g.unflat(idx);
        !self.offsets.iter().any(|&(dx, dy)| {
            let (nx, ny) = (c.ix as i64 + dx, c.iy as i64 + dy);
            g.contains_cell(nx, ny) && self.view.blocks(self.map.get(CellIndex::new(nx as usize, ny as usize)))
        })
    }
}

/// Incrementally maintained neighbour counts of Occupied and Unknown cells
/// within a fixed inflation radius, giving O(1) queries for both views.
#[derive(Debug, Clone)]
pub struct TraversabilityIndex {
    geometry: GridGeometry,
    inflation: f64,
    offsets: Vec<(i64, i64)>,
    near_occupied: Vec<u16>,
    near_unknown: Vec<u16>,
}

impl TraversabilityIndex {
    pub fn build(map: &GridMap, inflation: f64) -> Self {
        let geometry = *map.geometry();
        let mut index = Self {
            geometry,
            inflation,
            offsets: disk_offsets(inflation, geometry.resolution),
            near_occupied: vec![0; geometry.len()],
            near_unknown: vec![0; geometry.len()],
        };
        for (idx, &state) in map.cells().iter().enumerate() {
            index.bump(idx, state, 1);
        }
        index
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    fn bump(&mut self, idx: usize, state: CellState, delta: i32) {
        let counts = match state {
            CellState::Occupied => &mut self.near_occupied,
            CellState::Unknown => &mut self.near_unknown,
            CellState::Free => return,
        };
        let g = &self.geometry;
        let c = g.unflat(idx);
        for &(dx, dy) in &self.offsets {
            let (nx, ny) = (c.ix as i64 + dx, c.iy as i64 + dy);
            if g.contains_cell(nx, ny) {
                let n = ny as usize * g.width + nx as usize;
                counts[n] = (counts[n] as i32 + delta) as u16;
            }
        }
    }

    pub fn apply(&mut self, changes: &[CellChange]) {
        for ch in changes {
            self.bump(ch.index, ch.from, -1);
            self.bump(ch.index, ch.to, 1);
        }
    }

    pub fn is_traversable(&self, idx: usize, view: TraversabilityView) -> bool {
        match view {
            TraversabilityView::PlanningView => self.near_occupied[idx] == 0,
            TraversabilityView::CollisionView => self.near_occupied[idx] == 0 && self.near_unknown[idx] == 0,
        }
    }

    pub fn view(&self, view: TraversabilityView) -> IndexView<'_> {
        IndexView { index: self, view }
    }
}

#[derive(Clone, Copy)]
pub struct IndexView<'a> {
    index: &'a TraversabilityIndex,
    view: TraversabilityView,
}

impl Traversability for IndexView<'_> {
    fn geometry(&self) -> &GridGeometry {
        &self.index.geometry
    }

    fn passable(&self, idx: usize) -> bool {
        self.index.is_traversable(idx, self.view)
    }
}
