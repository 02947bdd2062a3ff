//! Uncertainty propagation along a plan and 3σ-ellipse collision prediction.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::estimation::{ekf_predict, Belief, NoiseModel};
use crate::geometry::Point2;
use crate::mapsync::Traversability;
use crate::world::GridGeometry;

use super::profile::PlannedTrajectory;
use super::NavError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatedBelief {
    pub belief: Belief,
    /// Seconds from the start of propagation.
    pub eta: f64,
    /// Arc length travelled from the start of propagation, meters.
    pub distance: f64,
}

/// Runs prediction only along `traj.controls[from..]`, keeping every
/// `sample_every`-th belief until `horizon` meters of arc length have been
/// covered or the trajectory ends. The first entry is `b` itself.
pub fn propagate_uncertainty(
    b: &Belief,
    traj: &PlannedTrajectory,
    from: usize,
    horizon: f64,
    noise: &NoiseModel,
    sample_every: usize,
) -> Result<Vec<PropagatedBelief>, NavError> {
    if !b.initialized {
        return Err(NavError::Uninitialized);
    }
    let mut out = vec![PropagatedBelief { belief: *b, eta: 0.0, distance: 0.0 }];
    let mut cur = *b;
    let (mut eta, mut distance) = (0.0, 0.0);
    let controls = traj.controls.get(from..).unwrap_or(&[]);
    for (k, u) in controls.iter().enumerate() {
        if distance >= horizon {
            break;
        }
        cur = ekf_predict(&cur, u, traj.dt, noise).map_err(|_| NavError::Uninitialized)?;
        eta += traj.dt;
        distance += u.v_x.hypot(u.v_y) * traj.dt;
        let last = k + 1 == controls.len() || distance >= horizon;
        if (k + 1) % sample_every.max(1) == 0 || last {
            out.push(PropagatedBelief { belief: cur, eta, distance });
        }
    }
    Ok(out)
}

/// The 3σ level set of a 2D Gaussian: semi-axes `a ≥ b` along unit vectors `v1 ⟂ v2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEllipse {
    pub a: f64,
    pub b: f64,
    pub v1: Point2,
    pub v2: Point2,
}

impl SigmaEllipse {
    /// Membership of the offset `d` from the ellipse center.
    pub fn contains(&self, d: &Point2) -> bool {
        let (p, q) = (d.dot(&self.v1), d.dot(&self.v2));
        let term = |x: f64, r: f64| {
            if r > 0.0 {
                Some((x / r).powi(2))
            } else if x.abs() <= 1e-12 {
                Some(0.0)
            } else {
                None
            }
        };
        match (term(p, self.a), term(q, self.b)) {
            (Some(x), Some(y)) => x + y <= 1.0,
            _ => false,
        }
    }

    /// Half widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> Point2 {
        Point2::new(
            (self.a * self.v1.x).hypot(self.b * self.v2.x),
            (self.a * self.v1.y).hypot(self.b * self.v2.y),
        )
    }
}

/// Closed-form eigen decomposition of a symmetric 2×2 covariance.
pub fn sigma_ellipse(cov: &Matrix2<f64>) -> Result<SigmaEllipse, NavError> {
    const TOL: f64 = 1e-9;
    let (p, q, r) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    if !(p.is_finite() && q.is_finite() && r.is_finite()) {
        return Err(NavError::NotPositiveSemidefinite);
    }
    let mean = 0.5 * (p + r);
    let spread = (0.5 * (p - r)).hypot(q);
    let (l1, l2) = (mean + spread, mean - spread);
    if l2 < -TOL {
        return Err(NavError::NotPositiveSemidefinite);
    }
    let v1 = if q == 0.0 {
        if p >= r {
            Point2::new(1.0, 0.0)
        } else {
            Point2::new(0.0, 1.0)
        }
    } else {
        let v = Point2::new(l1 - r, q);
        let v = if v.norm() > 0.0 { v } else { Point2::new(q, l1 - p) };
        let v = v.normalize();
        if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
            -v
        } else {
            v
        }
    };
    Ok(SigmaEllipse { a: 3.0 * l1.max(0.0).sqrt(), b: 3.0 * l2.max(0.0).sqrt(), v1, v2: Point2::new(-v1.y, v1.x) })
}

/// Flat indices of cells whose centers lie inside the ellipse around
/// `center`. The cell holding `center` is always included. Cells outside
/// the map are skipped.
pub fn ellipse_cells(geometry: &GridGeometry, center: &Point2, e: &SigmaEllipse, out: &mut Vec<usize>) {
    out.clear();
    let own = geometry.quantize(center);
    if geometry.contains_cell(own.0, own.1) {
        out.push(own.1 as usize * geometry.width + own.0 as usize);
    }
    let half = e.half_extents();
    let (x0, y0) = geometry.quantize(&(center - half));
    let (x1, y1) = geometry.quantize(&(center + half));
    for iy in y0.max(0)..=y1.min(geometry.height as i64 - 1) {
        for ix in x0.max(0)..=x1.min(geometry.width as i64 - 1) {
            if (ix, iy) == own {
                continue;
            }
            let c = geometry.grid_to_world(crate::world::CellIndex::new(ix as usize, iy as usize));
            if e.contains(&(c - center)) {
                out.push(iy as usize * geometry.width + ix as usize);
            }
        }
    }
}

/// Collision request from a UGV to the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionInfo {
    pub ugv_id: usize,
    /// Support point the UAV should reach.
    pub p_ps: Point2,
    /// Absolute predicted collision time.
    pub t_pc: f64,
    /// Mean position at the predicted collision.
    pub p_pc: Point2,
    pub issued_at: f64,
}

/// First propagated sample whose ellipse touches a blocked cell.
pub fn first_collision(beliefs: &[PropagatedBelief], view: &impl Traversability) -> Option<usize> {
    let mut cells = Vec::new();
    beliefs.iter().position(|pb| {
        let mean = pb.belief.mean.position();
        let ellipse = sigma_ellipse(&pb.belief.position_cov()).unwrap_or(SigmaEllipse {
            a: 0.0,
            b: 0.0,
            v1: Point2::new(1.0, 0.0),
            v2: Point2::new(0.0, 1.0),
        });
        ellipse_cells(view.geometry(), &mean, &ellipse, &mut cells);
        cells.iter().any(|&c| !view.passable(c))
    })
}

/// Length of a leading run of blocked samples that may be ignored: the run
/// must start at the current pose, end within `max_distance` of travel, and
/// keep every mean on a passable cell. Returns 0 when there is no such run.
pub fn recovery_run(beliefs: &[PropagatedBelief], view: &impl Traversability, max_distance: f64) -> usize {
    let blocked = |pb: &PropagatedBelief| first_collision(std::slice::from_ref(pb), view).is_some();
    if beliefs.first().is_none_or(|pb| !blocked(pb)) {
        return 0;
    }
    let Some(end) = beliefs.iter().position(|pb| !blocked(pb)) else {
        return 0;
    };
    let clear_means = beliefs[..end].iter().all(|pb| view.passable_point(&pb.belief.mean.position()));
    if beliefs[end].distance <= max_distance && clear_means {
        end
    } else {
        0
    }
}

/// `p_pc` set back by `setback` against `dir`. If that point is blocked in
/// `view`, walks back along `path` (ordered toward `p_pc`) to the first
/// passable sample at least `setback` away, else returns `path[0]`.
pub fn select_support_point(p_pc: &Point2, dir: &Point2, setback: f64, path: &[Point2], view: &impl Traversability) -> Point2 {
    let candidate = p_pc - dir.normalize() * setback;
    if setback == 0.0 || view.passable_point(&candidate) {
        return candidate;
    }
    path.iter()
        .rev()
        .filter(|p| (*p - p_pc).norm() >= setback)
        .find(|p| view.passable_point(p))
        .or(path.first())
        .copied()
        .unwrap_or(candidate)
}

/// Predicts the first collision along `beliefs` against `cp_view` and builds
/// the request. `min_lead` keeps `t_pc` strictly after `issued_at`.
#[allow(clippy::too_many_arguments)]
pub fn predict_collision(
    ugv_id: usize,
    beliefs: &[PropagatedBelief],
    cp_view: &impl Traversability,
    p_view: &impl Traversability,
    setback: f64,
    issued_at: f64,
    min_lead: f64,
) -> Option<CollisionInfo> {
    let hit = first_collision(beliefs, cp_view)?;
    let pb = &beliefs[hit];
    let p_pc = pb.belief.mean.position();
    let dir = Point2::new(pb.belief.mean.theta.cos(), pb.belief.mean.theta.sin());
    let path: Vec<Point2> = beliefs[..=hit].iter().map(|b| b.belief.mean.position()).collect();
    let p_ps = select_support_point(&p_pc, &dir, setback, &path, p_view);
    Some(CollisionInfo { ugv_id, p_ps, t_pc: (issued_at + pb.eta).max(issued_at + min_lead), p_pc, issued_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionMode {
    Proceed,
    StopAndWait,
}

pub fn wait_guard(now: f64, info: Option<&CollisionInfo>, t_c: f64) -> MotionMode {
    match info {
        Some(i) if i.t_pc - now < t_c => MotionMode::StopAndWait,
        _ => MotionMode::Proceed,
    }
}
