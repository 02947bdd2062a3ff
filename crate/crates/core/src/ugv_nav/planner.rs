//! 8-connected A* over a traversability view, plus line-of-sight smoothing.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::geometry::Point2;
use crate::mapsync::{traverse_ray, Traversability};
use crate::world::GridGeometry;

use super::NavError;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Neighbour offsets with their length in cells. Diagonals come last.
pub(crate) const NEIGHBOURS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (-1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, -1, SQRT2),
];

/// Successors of `idx` with edge costs in meters. A diagonal step needs both
/// adjacent orthogonal cells passable so paths never squeeze between corners.
pub(crate) fn successors(view: &impl Traversability, idx: usize, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let g = view.geometry();
    let c = g.unflat(idx);
    let (x, y) = (c.ix as i64, c.iy as i64);
    let open = |nx: i64, ny: i64| g.contains_cell(nx, ny) && view.passable(ny as usize * g.width + nx as usize);
    for &(dx, dy, len) in &NEIGHBOURS {
        let (nx, ny) = (x + dx, y + dy);
        if !open(nx, ny) {
            continue;
        }
        if dx != 0 && dy != 0 && !(open(x + dx, y) && open(x, y + dy)) {
            continue;
        }
        out.push((ny as usize * g.width + nx as usize, len * g.resolution));
    }
}

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    idx: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Reversed so the max-heap pops the smallest f, then the smallest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.idx.cmp(&self.idx))
    }
}

/// Shortest cell path from the cell of `start` to the cell of `goal`, as flat
/// indices including both ends.
pub fn plan_path(view: &impl Traversability, start: &Point2, goal: &Point2) -> Result<Vec<usize>, NavError> {
    let g = *view.geometry();
    let s = g.world_to_grid(start).map_err(|_| NavError::StartBlocked)?;
    let t = g.world_to_grid(goal).map_err(|_| NavError::Unreachable)?;
    let (s, t) = (g.flat(s), g.flat(t));
    if !view.passable(s) {
        return Err(NavError::StartBlocked);
    }
    if !view.passable(t) {
        return Err(NavError::Unreachable);
    }
    let goal_center = g.grid_to_world(g.unflat(t));
    let h = |idx: usize| (g.grid_to_world(g.unflat(idx)) - goal_center).norm();

    let mut cost = vec![f64::INFINITY; g.len()];
    let mut parent = vec![u32::MAX; g.len()];
    let mut closed = vec![false; g.len()];
    let mut heap = BinaryHeap::new();
    let mut next = Vec::with_capacity(8);
    cost[s] = 0.0;
    heap.push(Open { f: h(s), idx: s });
    while let Some(Open { idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        if idx == t {
            let mut path = vec![t];
            let mut cur = t;
            while cur != s {
                cur = parent[cur] as usize;
                path.push(cur);
            }
            path.reverse();
            return Ok(path);
        }
        closed[idx] = true;
        successors(view, idx, &mut next);
        for &(n, w) in &next {
            let c = cost[idx] + w;
            if c < cost[n] {
                cost[n] = c;
                parent[n] = idx as u32;
                heap.push(Open { f: c + h(n), idx: n });
            }
        }
    }
    Err(NavError::Unreachable)
}

/// Sum of edge lengths along a cell path, meters.
pub fn path_cost(view: &impl Traversability, path: &[usize]) -> f64 {
    let g = view.geometry();
    path.windows(2)
        .map(|w| {
            let (a, b) = (g.unflat(w[0]), g.unflat(w[1]));
            let diagonal = a.ix != b.ix && a.iy != b.iy;
            g.resolution * if diagonal { SQRT2 } else { 1.0 }
        })
        .sum()
}

/// Wraps a view so the map border acts as a wall of blocked cells just
/// outside the grid, inflated by `margin`.
pub struct Walled<V> {
    inner: V,
    margin: f64,
}

impl<V: Traversability> Walled<V> {
    pub fn new(inner: V, margin: f64) -> Self {
        Self { inner, margin }
    }
}

impl<V: Traversability> Traversability for Walled<V> {
    fn geometry(&self) -> &GridGeometry {
        self.inner.geometry()
    }

    fn passable(&self, idx: usize) -> bool {
        let g = self.inner.geometry();
        let c = g.unflat(idx);
        let cells = c.ix.min(c.iy).min(g.width - 1 - c.ix).min(g.height - 1 - c.iy);
        (cells + 1) as f64 * g.resolution > self.margin + 1e-9 && self.inner.passable(idx)
    }
}

/// Center of the passable cell nearest to `p` by 4-connected flood order,
/// within `max_radius` meters.
pub fn nearest_passable(view: &impl Traversability, p: &Point2, max_radius: f64) -> Option<Point2> {
    let g = *view.geometry();
    let (qx, qy) = g.quantize(p);
    let cx = qx.clamp(0, g.width as i64 - 1);
    let cy = qy.clamp(0, g.height as i64 - 1);
    let reach = (max_radius / g.resolution).ceil() as i64;
    let mut seen = std::collections::HashSet::new();
    let mut queue = VecDeque::from([(cx, cy)]);
    seen.insert((cx, cy));
    while let Some((x, y)) = queue.pop_front() {
        let idx = y as usize * g.width + x as usize;
        if view.passable(idx) {
            return Some(g.grid_to_world(g.unflat(idx)));
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if g.contains_cell(nx, ny) && (nx - cx).abs().max((ny - cy).abs()) <= reach && seen.insert((nx, ny)) {
                queue.push_back((nx, ny));
            }
        }
    }
    None
}

/// Whether every cell the segment passes through is passable.
pub fn segment_clear(view: &impl Traversability, a: &Point2, b: &Point2) -> bool {
    traverse_ray(view.geometry(), a, b).into_iter().all(|idx| view.passable(idx))
}

/// Greedy line-of-sight shortcutting of `[start, cell centers.., goal]`.
pub fn smooth_path(view: &impl Traversability, start: &Point2, cells: &[usize], goal: &Point2) -> Vec<Point2> {
    let g = view.geometry();
    let mut points = vec![*start];
    if cells.len() > 2 {
        points.extend(cells[1..cells.len() - 1].iter().map(|&c| g.grid_to_world(g.unflat(c))));
    }
    points.push(*goal);
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = i + 1;
        while j + 1 < points.len() && segment_clear(view, &points[i], &points[j + 1]) {
            j += 1;
        }
        out.push(points[j]);
        i = j;
    }
    out.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    out
}
