//! Single-vehicle open routing with deadline windows.
//!
//! Node 0 is the UAV; nodes `1..=n` are support points. Returning to node 0
//! is free, so the objective is the arrival time at the last node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::ugv_nav::CollisionInfo;

use super::travel::{travel_time_between, travel_time_from_start};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SchedError {
    #[error("request from UGV {ugv_id} has t_pc {t_pc} not after now {now}")]
    StaleRequest { ugv_id: usize, t_pc: f64, now: f64 },
    #[error("no request to schedule")]
    Empty,
    #[error("no visit order satisfies every window")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub ugv_id: usize,
    pub p_ps: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrptwInstance {
    pub n: usize,
    /// `(n+1)×(n+1)` seconds, row-major by origin node.
    pub cost: Vec<Vec<f64>>,
    /// `[open, close]` per node, seconds relative to `now`. Node 0 closes at infinity.
    pub windows: Vec<[f64; 2]>,
    /// Entry `k` describes node `k + 1`.
    pub node_meta: Vec<NodeMeta>,
}

impl VrptwInstance {
    pub fn close(&self, node: usize) -> f64 {
        self.windows[node][1]
    }

    /// Cumulative arrival times along `order` (nodes in `1..=n`).
    pub fn arrivals(&self, order: &[usize]) -> Vec<f64> {
        let mut prev = 0;
        let mut t = 0.0;
        order
            .iter()
            .map(|&k| {
                t += self.cost[prev][k];
                prev = k;
                t
            })
            .collect()
    }

    pub fn is_feasible(&self, order: &[usize]) -> bool {
        self.arrivals(order).iter().zip(order).all(|(&t, &k)| t <= self.close(k))
    }

    /// `(violated windows, total lateness)` along `order`.
    pub fn violations(&self, order: &[usize]) -> (usize, f64) {
        self.arrivals(order).iter().zip(order).fold((0, 0.0), |(c, m), (&t, &k)| {
            let late = t - self.close(k);
            if late > 0.0 {
                (c + 1, m + late)
            } else {
                (c, m)
            }
        })
    }

    /// Same instance with every window opened to infinity.
    pub fn without_windows(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.windows {
            w[1] = f64::INFINITY;
        }
        out
    }
}

/// UAV kinematic state used as node 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Point2,
    pub velocity: Point2,
}

pub fn build_vrptw(uav: &UavState, requests: &[CollisionInfo], now: f64, v_max: f64, a_max: f64) -> Result<VrptwInstance, SchedError> {
    if requests.is_empty() {
        return Err(SchedError::Empty);
    }
    if let Some(r) = requests.iter().find(|r| r.t_pc <= now) {
        return Err(SchedError::StaleRequest { ugv_id: r.ugv_id, t_pc: r.t_pc, now });
    }
    let n = requests.len();
    let mut cost = vec![vec![0.0; n + 1]; n + 1];
    for (i, ri) in requests.iter().enumerate() {
        cost[0][i + 1] = travel_time_from_start(&uav.position, &uav.velocity, &ri.p_ps, v_max, a_max);
        for (j, rj) in requests.iter().enumerate() {
            if i != j {
                cost[i + 1][j + 1] = travel_time_between(&ri.p_ps, &rj.p_ps, v_max);
            }
        }
    }
    let mut windows = vec![[0.0, f64::INFINITY]];
    windows.extend(requests.iter().map(|r| [0.0, r.t_pc - now]));
    let node_meta = requests.iter().map(|r| NodeMeta { ugv_id: r.ugv_id, p_ps: r.p_ps }).collect();
    Ok(VrptwInstance { n, cost, windows, node_meta })
}

/// Exact subset dynamic programming over minimal arrival times. States whose
/// arrival misses the node's window are pruned. Equal-cost orders resolve to
/// the lexicographically smallest.
pub fn solve_exact(inst: &VrptwInstance) -> Option<Vec<usize>> {
    let n = inst.n;
    if n == 0 {
        return Some(Vec::new());
    }
    let full = (1usize << n) - 1;
    let mut arrival = vec![f64::INFINITY; (full + 1) * n];
    let mut parent = vec![u8::MAX; (full + 1) * n];
    let at = |mask: usize, last: usize| mask * n + last;

    fn order_of(parent: &[u8], n: usize, mut mask: usize, mut last: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        loop {
            out.push(last + 1);
            let p = parent[mask * n + last];
            mask &= !(1 << last);
            if p == u8::MAX {
                break;
            }
            last = p as usize;
        }
        out.reverse();
        out
    }

    for k in 0..n {
        let t = inst.cost[0][k + 1];
        if t <= inst.close(k + 1) {
            arrival[at(1 << k, k)] = t;
        }
    }
    for mask in 1..=full {
        for last in 0..n {
            let here = arrival[at(mask, last)];
            if mask & (1 << last) == 0 || !here.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let t = here + inst.cost[last + 1][next + 1];
                if t > inst.close(next + 1) {
                    continue;
                }
                let m2 = mask | (1 << next);
                let slot = at(m2, next);
                let better = if t < arrival[slot] {
                    true
                } else if t == arrival[slot] {
                    let mut mine = order_of(&parent, n, mask, last);
                    mine.push(next + 1);
                    mine < order_of(&parent, n, m2, next)
                } else {
                    false
                };
                if better {
                    arrival[slot] = t;
                    parent[slot] = last as u8;
                }
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for last in 0..n {
        let t = arrival[at(full, last)];
        if !t.is_finite() {
            continue;
        }
        let order = order_of(&parent, n, full, last);
        let replace = match &best {
            None => true,
            Some((bt, bo)) => t < *bt || (t == *bt && order < *bo),
        };
        if replace {
            best = Some((t, order));
        }
    }
    best.map(|(_, o)| o)
}

fn total(inst: &VrptwInstance, order: &[usize]) -> f64 {
    inst.arrivals(order).last().copied().unwrap_or(0.0)
}

/// Nodes sorted by window close, then index.
pub fn earliest_close_order(inst: &VrptwInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=inst.n).collect();
    order.sort_by(|&a, &b| inst.close(a).total_cmp(&inst.close(b)).then(a.cmp(&b)));
    order
}

/// Cheapest feasible insertion followed by or-opt and 2-opt improvement.
pub fn solve_heuristic(inst: &VrptwInstance) -> Option<Vec<usize>> {
    let mut route: Vec<usize> = Vec::with_capacity(inst.n);
    for node in earliest_close_order(inst) {
        let mut best: Option<(f64, usize)> = None;
        for pos in 0..=route.len() {
            let mut cand = route.clone();
            cand.insert(pos, node);
            if inst.is_feasible(&cand) {
                let t = total(inst, &cand);
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, pos));
                }
            }
        }
        let (_, pos) = best?;
        route.insert(pos, node);
    }
    improve(inst, route, |inst, r| inst.is_feasible(r).then(|| total(inst, r)))
}

/// First-improvement local search with relocation and segment reversal.
fn improve(inst: &VrptwInstance, mut route: Vec<usize>, score: impl Fn(&VrptwInstance, &[usize]) -> Option<f64>) -> Option<Vec<usize>> {
    let mut current = score(inst, &route)?;
    let n = route.len();
    for _ in 0..1000 {
        let mut improved = false;
        'search: for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut moved = route.clone();
                let node = moved.remove(i);
                moved.insert(j, node);
                if let Some(s) = score(inst, &moved) {
                    if s < current - 1e-12 {
                        route = moved;
                        current = s;
                        improved = true;
                        break 'search;
                    }
                }
                if i < j {
                    let mut rev = route.clone();
                    rev[i..=j].reverse();
                    if let Some(s) = score(inst, &rev) {
                        if s < current - 1e-12 {
                            route = rev;
                            current = s;
                            improved = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    Some(route)
}

/// Exact up to `exact_limit` nodes, heuristic beyond.
pub fn solve_vrptw(inst: &VrptwInstance, exact_limit: usize) -> Result<Vec<usize>, SchedError> {
    let order = if inst.n <= exact_limit { solve_exact(inst) } else { solve_heuristic(inst) };
    order.ok_or(SchedError::Infeasible)
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Order minimizing total lateness, then the number of violated windows.
/// Counting violations first would push UGVs that are already stopped, and
/// so late in every order, behind everyone with slack.
/// Exhaustive up to `exhaustive_limit` nodes; ties within 1e-9 s go to the
/// order closest to earliest-close-first.
pub fn least_violation_order(inst: &VrptwInstance, exhaustive_limit: usize) -> Vec<usize> {
    let edf = earliest_close_order(inst);
    let key = |order: &[usize]| inst.violations(order);
    let better = |a: (usize, f64), b: (usize, f64)| a.1 < b.1 - 1e-9 || ((a.1 - b.1).abs() <= 1e-9 && a.0 < b.0);
    if inst.n <= exhaustive_limit {
        let mut ranks: Vec<usize> = (0..inst.n).collect();
        let mut best = edf.clone();
        let mut best_key = key(&best);
        while next_permutation(&mut ranks) {
            let order: Vec<usize> = ranks.iter().map(|&r| edf[r]).collect();
            let k = key(&order);
            if better(k, best_key) {
                best = order;
                best_key = k;
            }
        }
        return best;
    }
    let score = |inst: &VrptwInstance, r: &[usize]| {
        let (c, m) = inst.violations(r);
        Some(m + c as f64 * 1e-6)
    };
    improve(inst, edf.clone(), score).unwrap_or(edf)
}
