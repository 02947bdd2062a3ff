//! Speed escalation over the routing solver, and the event-driven scheduler
//! that owns the UAV's outstanding requests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::ugv_nav::CollisionInfo;

use super::vrptw::{build_vrptw, least_violation_order, solve_vrptw, SchedError, UavState, VrptwInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    /// Node indices into the instance, `1..=n`.
    pub order: Vec<usize>,
    pub arrival_times: Vec<f64>,
    pub v_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulingMode {
    /// Routing with deadline windows and speed escalation.
    Windows,
    /// Serve the request with the smallest `t_pc` first, at base speed.
    Greedy,
    /// Routing on travel time alone, at base speed.
    NoWindows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub base_v_max: f64,
    pub a_max: f64,
    pub escalation_factor: f64,
    /// Highest speed as a multiple of `base_v_max`.
    pub escalation_cap: f64,
    pub exact_limit: usize,
    pub fallback_exhaustive_limit: usize,
    /// Distance to the support point within which a visit can complete.
    /// `None` completes a visit on any emission, i.e. anywhere inside the
    /// measurement range of the target UGV.
    pub arrival_tolerance: Option<f64>,
    /// Longest interval between reschedules.
    pub reschedule_floor: f64,
    pub mode: SchedulingMode,
    /// Follow the UGV centroid when idle instead of hovering.
    pub idle_follow_centroid: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            base_v_max: 3.0,
            a_max: 1.0,
            escalation_factor: 1.25,
            escalation_cap: 4.0,
            exact_limit: 12,
            fallback_exhaustive_limit: 8,
            arrival_tolerance: None,
            reschedule_floor: 1.0,
            mode: SchedulingMode::Windows,
            idle_follow_centroid: false,
        }
    }
}

/// Speeds tried in order: `base·factor^k` below the cap, then the cap itself.
pub fn escalation_ladder(base: f64, factor: f64, cap: f64) -> Vec<f64> {
    let top = base * cap;
    let mut out = vec![base];
    loop {
        let next = out.last().unwrap() * factor;
        if next > top * (1.0 + 1e-12) {
            break;
        }
        out.push(next);
    }
    if *out.last().unwrap() < top * (1.0 - 1e-12) {
        out.push(top);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub tour: Tour,
    /// Instance the tour was certified on, or the fallback instance.
    pub instance: VrptwInstance,
    /// Rungs tried beyond the base speed.
    pub escalations: usize,
    /// True when no rung was feasible and the least-violation order was used.
    pub fallback: bool,
}

fn tour_for(inst: &VrptwInstance, order: Vec<usize>, v: f64) -> Tour {
    Tour { arrival_times: inst.arrivals(&order), order, v_used: v }
}

/// Escalates speed until the windows are satisfiable; falls back to the
/// order with the least total lateness and flies it at the cap. Lateness is
/// judged on base-speed costs: at the cap only the first leg pays for
/// acceleration, so a stop at a nearby node looks cheaper than flying
/// straight to a far one.
pub fn schedule(uav: &UavState, requests: &[CollisionInfo], now: f64, config: &SchedulerConfig) -> Result<ScheduleOutcome, SchedError> {
    let ladder = escalation_ladder(config.base_v_max, config.escalation_factor, config.escalation_cap);
    let mut last = None;
    for (k, &v) in ladder.iter().enumerate() {
        let inst = build_vrptw(uav, requests, now, v, config.a_max)?;
        if let Ok(order) = solve_vrptw(&inst, config.exact_limit) {
            return Ok(ScheduleOutcome { tour: tour_for(&inst, order, v), instance: inst, escalations: k, fallback: false });
        }
        last = Some((inst, v));
    }
    let (_, v) = last.expect("ladder is never empty");
    let inst = build_vrptw(uav, requests, now, config.base_v_max, config.a_max)?;
    let order = least_violation_order(&inst, config.fallback_exhaustive_limit);
    Ok(ScheduleOutcome { tour: tour_for(&inst, order, v), instance: inst, escalations: ladder.len() - 1, fallback: true })
}

/// Greedy single-visit plan toward the request with the smallest `t_pc`.
pub fn schedule_greedy(uav: &UavState, requests: &[CollisionInfo], now: f64, config: &SchedulerConfig) -> Result<ScheduleOutcome, SchedError> {
    let inst = build_vrptw(uav, requests, now, config.base_v_max, config.a_max)?;
    let first = (1..=inst.n)
        .min_by(|&a, &b| inst.close(a).total_cmp(&inst.close(b)).then(a.cmp(&b)))
        .ok_or(SchedError::Empty)?;
    let mut order = vec![first];
    order.extend((1..=inst.n).filter(|&k| k != first));
    Ok(ScheduleOutcome { tour: tour_for(&inst, order, config.base_v_max), instance: inst, escalations: 0, fallback: false })
}

/// Plain routing with windows ignored.
pub fn schedule_without_windows(uav: &UavState, requests: &[CollisionInfo], now: f64, config: &SchedulerConfig) -> Result<ScheduleOutcome, SchedError> {
    let inst = build_vrptw(uav, requests, now, config.base_v_max, config.a_max)?.without_windows();
    let order = solve_vrptw(&inst, config.exact_limit)?;
    Ok(ScheduleOutcome { tour: tour_for(&inst, order, config.base_v_max), instance: inst, escalations: 0, fallback: false })
}

/// Head of the tour that still has a live request, with its speed cap.
pub fn current_waypoint(tour: &Tour, instance: &VrptwInstance, live: &BTreeMap<usize, CollisionInfo>) -> Option<(Point2, f64)> {
    tour.order.iter().find_map(|&k| {
        let meta = &instance.node_meta[k - 1];
        live.get(&meta.ugv_id).map(|r| (r.p_ps, tour.v_used))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    NewRequest,
    Withdrawn,
    Served,
    Expired,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reschedule {
    pub at: f64,
    pub triggers: Vec<Trigger>,
    pub outcome: Option<ScheduleOutcome>,
    /// UGV ids in visiting order.
    pub ugv_order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct UavScheduler {
    config: SchedulerConfig,
    requests: BTreeMap<usize, CollisionInfo>,
    plan: Option<ScheduleOutcome>,
    ugv_order: Vec<usize>,
    pending: Vec<Trigger>,
    expired_flagged: Vec<usize>,
    last_schedule: f64,
    reschedules: u64,
}

impl UavScheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Self {
            config,
            requests: BTreeMap::new(),
            plan: None,
            ugv_order: Vec::new(),
            pending: Vec::new(),
            expired_flagged: Vec::new(),
            last_schedule: f64::NEG_INFINITY,
            reschedules: 0,
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn requests(&self) -> &BTreeMap<usize, CollisionInfo> {
        &self.requests
    }

    pub fn reschedules(&self) -> u64 {
        self.reschedules
    }

    pub fn ugv_order(&self) -> &[usize] {
        &self.ugv_order
    }

    /// Adds or refreshes a request. Only a request from a UGV without a live
    /// one triggers rescheduling.
    pub fn receive_request(&mut self, info: CollisionInfo) {
        if self.requests.insert(info.ugv_id, info).is_none() {
            self.pending.push(Trigger::NewRequest);
        }
        self.expired_flagged.retain(|&id| id != info.ugv_id);
    }

    pub fn withdraw(&mut self, ugv_id: usize) {
        if self.requests.remove(&ugv_id).is_some() {
            self.ugv_order.retain(|&id| id != ugv_id);
            self.pending.push(Trigger::Withdrawn);
        }
    }

    /// UGV the UAV is currently flying to.
    pub fn target(&self) -> Option<usize> {
        self.ugv_order.iter().copied().find(|id| self.requests.contains_key(id))
    }

    /// Records that a measurement and a map patch were sent to `ugv_id` this
    /// step. Completes the visit if it is the current target and, with an
    /// `arrival_tolerance`, the UAV is close enough to its support point.
    pub fn observe_support(&mut self, ugv_id: usize, uav_position: &Point2) -> bool {
        if self.target() != Some(ugv_id) {
            return false;
        }
        let at_point = self
            .requests
            .get(&ugv_id)
            .is_some_and(|r| self.config.arrival_tolerance.is_none_or(|tol| (r.p_ps - uav_position).norm() <= tol));
        if at_point {
            self.requests.remove(&ugv_id);
            self.ugv_order.retain(|&id| id != ugv_id);
            self.pending.push(Trigger::Served);
        }
        at_point
    }

    /// Collects triggers and rebuilds the plan when any fired.
    pub fn update(&mut self, now: f64, uav: &UavState) -> Option<Reschedule> {
        for (&id, r) in &self.requests {
            if r.t_pc <= now && !self.expired_flagged.contains(&id) {
                self.expired_flagged.push(id);
                self.pending.push(Trigger::Expired);
            }
        }
        if now - self.last_schedule >= self.config.reschedule_floor - 1e-9 {
            self.pending.push(Trigger::Periodic);
        }
        if self.pending.is_empty() {
            return None;
        }
        let triggers = std::mem::take(&mut self.pending);
        self.last_schedule = now;
        self.reschedules += 1;
        let live: Vec<CollisionInfo> = self
            .requests
            .values()
            .map(|r| CollisionInfo { t_pc: r.t_pc.max(now + 1e-3), ..*r })
            .collect();
        let outcome = if live.is_empty() {
            None
        } else {
            let result = match self.config.mode {
                SchedulingMode::Windows => schedule(uav, &live, now, &self.config),
                SchedulingMode::Greedy => schedule_greedy(uav, &live, now, &self.config),
                SchedulingMode::NoWindows => schedule_without_windows(uav, &live, now, &self.config),
            };
            Some(result.expect("live requests are fresh and nonempty"))
        };
        self.ugv_order = outcome
            .as_ref()
            .map(|o| o.tour.order.iter().map(|&k| o.instance.node_meta[k - 1].ugv_id).collect())
            .unwrap_or_default();
        self.plan = outcome.clone();
        Some(Reschedule { at: now, triggers, outcome, ugv_order: self.ugv_order.clone() })
    }

    /// Where to fly and how fast, or `None` to hold position.
    pub fn waypoint(&self) -> Option<(Point2, f64)> {
        let plan = self.plan.as_ref()?;
        let id = self.target()?;
        let p = self.requests.get(&id)?.p_ps;
        Some((p, plan.tour.v_used))
    }
}
