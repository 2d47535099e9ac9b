//! Intra-cluster task selection and exact pickup-and-delivery routing.
//!
//! A robot assigned to a cluster takes as many compatible tasks as its free
//! capacity allows and visits their pickups and deliveries in the cheapest
//! order that respects precedence and capacity. Routes are open: they start at
//! the robot's node and end at the last stop. Instances are small (at most a
//! handful of tasks per robot), so the order is found by depth-first branch
//! and bound with a dominance table on (visited set, last stop).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{NodeId, RobotId, TaskId};
use crate::roadmap::DistanceMatrix;

/// Above this many candidate subsets the selection switches to a bounded local search.
pub const EXHAUSTIVE_SUBSET_LIMIT: u64 = 2000;
/// Route evaluations allowed for the local search.
pub const LOCAL_SEARCH_BUDGET: usize = 2000;
const MAX_STOPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Pickup,
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub task: TaskId,
    pub kind: StopKind,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub task: TaskId,
    pub task_type: usize,
    pub pickup: NodeId,
    pub delivery: NodeId,
}

/// An item already on board; only its delivery remains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Onboard {
    pub task: TaskId,
    pub delivery: NodeId,
}

#[derive(Debug, Clone)]
pub struct RoutingInstance {
    pub robot: RobotId,
    pub start: NodeId,
    pub capability: Vec<f64>,
    pub capacity: u32,
    pub candidates: Vec<Candidate>,
    pub onboard: Vec<Onboard>,
    /// Travel costs covering the start, every pickup and every delivery.
    pub cost: DistanceMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub robot: RobotId,
    pub start: NodeId,
    pub selected: Vec<TaskId>,
    pub stops: Vec<Stop>,
    pub total_cost: f64,
    /// Load after each stop.
    pub load_profile: Vec<u32>,
    /// Visit order certificate: start is 0, stop `i` is `i + 1`.
    pub order: Vec<usize>,
    /// False when the subset search was budget-limited.
    pub exact: bool,
    pub excluded: Vec<(TaskId, String)>,
}

impl RoutePlan {
    pub fn empty(robot: RobotId, start: NodeId) -> Self {
        Self {
            robot,
            start,
            selected: Vec::new(),
            stops: Vec::new(),
            total_cost: 0.0,
            load_profile: Vec::new(),
            order: Vec::new(),
            exact: true,
            excluded: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Checks precedence, capacity, single visits and the ordering certificate.
    pub fn verify(&self, capacity: u32, initial_load: u32) -> std::result::Result<(), String> {
        let mut load = initial_load as i64;
        let mut picked: HashMap<TaskId, usize> = HashMap::new();
        let mut delivered: HashMap<TaskId, usize> = HashMap::new();
        for (i, stop) in self.stops.iter().enumerate() {
            match stop.kind {
                StopKind::Pickup => {
                    if picked.insert(stop.task, i).is_some() {
                        return Err(format!("task {} picked twice", stop.task));
                    }
                    load += 1;
                }
                StopKind::Delivery => {
                    if delivered.insert(stop.task, i).is_some() {
                        return Err(format!("task {} delivered twice", stop.task));
                    }
                    load -= 1;
                }
            }
            if load < 0 || load > capacity as i64 {
                return Err(format!("load {load} outside [0, {capacity}] after stop {i}"));
            }
            if self.load_profile.get(i).map(|&l| l as i64) != Some(load) {
                return Err(format!("load profile disagrees at stop {i}"));
            }
        }
        if load != 0 {
            return Err(format!("route ends with load {load}"));
        }
        for task in &self.selected {
            match (picked.get(task), delivered.get(task)) {
                (Some(p), Some(d)) if p < d => {}
                _ => return Err(format!("task {task} lacks a pickup before its delivery")),
            }
        }
        if self.order.len() != self.stops.len() + 1 || self.order.first() != Some(&0) {
            return Err("order certificate has wrong length".into());
        }
        // u_i + 1 <= u_j on every traversed arc
        if self.order.windows(2).any(|w| w[0] + 1 > w[1]) {
            return Err("order certificate is not increasing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactRoute {
    /// Stop indices in visit order.
    pub sequence: Vec<usize>,
    pub cost: f64,
}

/// Cheapest open route from `start` through every stop.
///
/// `cost` is indexed by location; `stop_locs[i]` is the location of stop `i`
/// and `load_delta[i]` its load change. Each `(a, b)` in `precedence` forces
/// stop `a` before stop `b`. Returns `Ok(None)` when no feasible order exists
/// (capacity or unreachable legs).
pub fn route_exact(
    cost: &[Vec<f64>],
    start: usize,
    stop_locs: &[usize],
    load_delta: &[i32],
    precedence: &[(usize, usize)],
    capacity: u32,
    initial_load: u32,
) -> Result<Option<ExactRoute>> {
    let n = stop_locs.len();
    if n > MAX_STOPS {
        return Err(Error::Domain(format!("{n} stops exceed the exact solver limit of {MAX_STOPS}")));
    }
    if load_delta.len() != n {
        return Err(Error::Domain("load_delta length differs from stop count".into()));
    }
    let mut required = vec![0u32; n];
    for &(a, b) in precedence {
        if a >= n || b >= n || a == b {
            return Err(Error::Domain(format!("invalid precedence pair ({a}, {b})")));
        }
        required[b] |= 1 << a;
    }
    if has_cycle(&required) {
        return Err(Error::Domain("precedence constraints contain a cycle".into()));
    }
    if n == 0 {
        return Ok(Some(ExactRoute { sequence: Vec::new(), cost: 0.0 }));
    }
    // Every stop still to visit needs at least its cheapest incoming leg.
    let min_in: Vec<f64> = (0..n)
        .map(|j| {
            std::iter::once(start)
                .chain((0..n).filter(|&i| i != j).map(|i| stop_locs[i]))
                .map(|from| cost[from][stop_locs[j]])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if min_in.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let mut search = Search {
        cost,
        start,
        stop_locs,
        load_delta,
        required: &required,
        capacity: capacity as i64,
        min_in: &min_in,
        best_cost: f64::INFINITY,
        best: None,
        seen: HashMap::new(),
        path: Vec::with_capacity(n),
    };
    search.dfs(0, None, initial_load as i64, 0.0);
    Ok(search.best.map(|sequence| ExactRoute {
        sequence,
        cost: search.best_cost,
    }))
}

fn has_cycle(required: &[u32]) -> bool {
    let n = required.len();
    let mut done = 0u32;
    loop {
        let ready: Vec<usize> = (0..n)
            .filter(|&i| done & (1 << i) == 0 && required[i] & !done == 0)
            .collect();
        if ready.is_empty() {
            return done.count_ones() as usize != n;
        }
        for i in ready {
            done |= 1 << i;
        }
    }
}

struct Search<'a> {
    cost: &'a [Vec<f64>],
    start: usize,
    stop_locs: &'a [usize],
    load_delta: &'a [i32],
    required: &'a [u32],
    capacity: i64,
    min_in: &'a [f64],
    best_cost: f64,
    best: Option<Vec<usize>>,
    seen: HashMap<(u32, usize), f64>,
    path: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, visited: u32, last: Option<usize>, load: i64, so_far: f64) {
        let n = self.stop_locs.len();
        if visited.count_ones() as usize == n {
            if so_far < self.best_cost {
                self.best_cost = so_far;
                self.best = Some(self.path.clone());
            }
            return;
        }
        let remaining_lb: f64 = (0..n)
            .filter(|&j| visited & (1 << j) == 0)
            .map(|j| self.min_in[j])
            .sum();
        // slack keeps rounding in the bound from cutting an optimal branch
        if so_far + remaining_lb * (1.0 - 1e-12) >= self.best_cost {
            return;
        }
        if let Some(l) = last {
            match self.seen.get(&(visited, l)) {
                Some(&c) if c <= so_far => return,
                _ => {
                    self.seen.insert((visited, l), so_far);
                }
            }
        }
        let from = last.map_or(self.start, |l| self.stop_locs[l]);
        for j in 0..n {
            if visited & (1 << j) != 0 || self.required[j] & !visited != 0 {
                continue;
            }
            let next_load = load + self.load_delta[j] as i64;
            if next_load < 0 || next_load > self.capacity {
                continue;
            }
            let leg = self.cost[from][self.stop_locs[j]];
            if !leg.is_finite() {
                continue;
            }
            self.path.push(j);
            self.dfs(visited | (1 << j), Some(j), next_load, so_far + leg);
            self.path.pop();
        }
    }
}

/// Number of k-subsets of n items, saturating.
fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

struct Evaluator<'a> {
    inst: &'a RoutingInstance,
    start: usize,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn loc(&self, node: NodeId) -> usize {
        self.inst.cost.index_of(node).expect("cost matrix covers every location")
    }

    /// Exact route over the onboard items plus the chosen candidates.
    fn route(&mut self, chosen: &[usize], onboard: &[usize]) -> Result<Option<(Vec<Stop>, f64)>> {
        self.evaluations += 1;
        let mut stops = Vec::new();
        let mut locs = Vec::new();
        let mut deltas = Vec::new();
        let mut precedence = Vec::new();
        for &o in onboard {
            let item = &self.inst.onboard[o];
            stops.push(Stop {
                task: item.task,
                kind: StopKind::Delivery,
                node: item.delivery,
            });
            locs.push(self.loc(item.delivery));
            deltas.push(-1);
        }
        for &c in chosen {
            let cand = &self.inst.candidates[c];
            let p = stops.len();
            stops.push(Stop {
                task: cand.task,
                kind: StopKind::Pickup,
                node: cand.pickup,
            });
            stops.push(Stop {
                task: cand.task,
                kind: StopKind::Delivery,
                node: cand.delivery,
            });
            locs.push(self.loc(cand.pickup));
            locs.push(self.loc(cand.delivery));
            deltas.extend([1, -1]);
            precedence.push((p, p + 1));
        }
        let route = route_exact(
            &self.inst.cost.m,
            self.start,
            &locs,
            &deltas,
            &precedence,
            self.inst.capacity,
            onboard.len() as u32,
        )?;
        Ok(route.map(|r| (r.sequence.iter().map(|&i| stops[i]).collect(), r.cost)))
    }
}

/// Picks up to the free capacity in compatible tasks and routes them optimally.
///
/// The objective is lexicographic: as many tasks as fit, then the lowest route
/// cost. Candidates the robot cannot handle or cannot reach are excluded with
/// a reason. Onboard items are always delivered. Costs must obey the triangle
/// inequality (shortest-path or Euclidean distances); subset pruning relies on it.
pub fn select_and_route(inst: &RoutingInstance) -> Result<RoutePlan> {
    let mut plan = RoutePlan::empty(inst.robot, inst.start);
    let start = inst
        .cost
        .index_of(inst.start)
        .ok_or_else(|| Error::Domain("cost matrix lacks the robot start".into()))?;
    let d = |a: NodeId, b: NodeId| inst.cost.between(a, b);

    let mut onboard = Vec::new();
    for (i, item) in inst.onboard.iter().enumerate() {
        if d(inst.start, item.delivery).is_finite() {
            onboard.push(i);
        } else {
            plan.excluded.push((item.task, "onboard delivery unreachable".into()));
        }
    }
    let mut order: Vec<usize> = (0..inst.candidates.len()).collect();
    order.sort_by_key(|&i| inst.candidates[i].task);
    let mut usable = Vec::new();
    for i in order {
        let c = &inst.candidates[i];
        if !inst.capability.get(c.task_type).is_some_and(|&u| u > 0.0) {
            plan.excluded.push((c.task, format!("robot cannot handle type {}", c.task_type)));
        } else if !d(inst.start, c.pickup).is_finite() {
            plan.excluded.push((c.task, "pickup unreachable".into()));
        } else if !d(c.pickup, c.delivery).is_finite() {
            plan.excluded.push((c.task, "delivery unreachable".into()));
        } else {
            usable.push(i);
        }
    }
    let slots = (inst.capacity as usize).saturating_sub(onboard.len());
    let take = slots.min(usable.len());

    let mut eval = Evaluator { inst, start, evaluations: 0 };
    // A route through task i costs at least start->pickup->delivery.
    let bound = |i: usize| {
        let c = &inst.candidates[i];
        d(inst.start, c.pickup) + d(c.pickup, c.delivery)
    };
    let onboard_bound = onboard
        .iter()
        .map(|&o| d(inst.start, inst.onboard[o].delivery))
        .fold(0.0, f64::max);

    let mut best: Option<(Vec<usize>, Vec<Stop>, f64)> = None;
    if binomial(usable.len(), take) <= EXHAUSTIVE_SUBSET_LIMIT {
        let mut subsets: Vec<(f64, Vec<usize>)> = combinations(&usable, take)
            .into_iter()
            .map(|s| (s.iter().map(|&i| bound(i)).fold(onboard_bound, f64::max), s))
            .collect();
        subsets.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (lb, subset) in subsets {
            if best.as_ref().is_some_and(|b| lb * (1.0 - 1e-12) >= b.2) {
                break;
            }
            if let Some((stops, cost)) = eval.route(&subset, &onboard)? {
                if best.as_ref().map_or(true, |b| cost < b.2) {
                    best = Some((subset, stops, cost));
                }
            }
        }
    } else {
        plan.exact = false;
        let mut chosen: Vec<usize> = Vec::new();
        let mut current: Option<(Vec<Stop>, f64)> = None;
        while chosen.len() < take {
            let mut step: Option<(usize, Vec<Stop>, f64)> = None;
            for &i in usable.iter().filter(|i| !chosen.contains(i)) {
                let mut trial = chosen.clone();
                trial.push(i);
                if let Some((stops, cost)) = eval.route(&trial, &onboard)? {
                    if step.as_ref().map_or(true, |s| cost < s.2) {
                        step = Some((i, stops, cost));
                    }
                }
            }
            let Some((i, stops, cost)) = step else { break };
            chosen.push(i);
            current = Some((stops, cost));
        }
        // First-improvement swaps until no swap helps or the budget runs out.
        let mut improved = true;
        while improved && eval.evaluations < LOCAL_SEARCH_BUDGET {
            improved = false;
            'swap: for slot in 0..chosen.len() {
                for &i in usable.iter().filter(|i| !chosen.contains(i)) {
                    if eval.evaluations >= LOCAL_SEARCH_BUDGET {
                        break 'swap;
                    }
                    let mut trial = chosen.clone();
                    trial[slot] = i;
                    if let Some((stops, cost)) = eval.route(&trial, &onboard)? {
                        if current.as_ref().map_or(true, |c| cost < c.1) {
                            chosen = trial;
                            current = Some((stops, cost));
                            improved = true;
                            break 'swap;
                        }
                    }
                }
            }
        }
        if let Some((stops, cost)) = current {
            chosen.sort_unstable();
            best = Some((chosen, stops, cost));
        }
    }

    let Some((subset, stops, cost)) = best else {
        return Ok(plan);
    };
    let mut load = onboard.len() as u32;
    plan.load_profile = stops
        .iter()
        .map(|s| {
            match s.kind {
                StopKind::Pickup => load += 1,
                StopKind::Delivery => load -= 1,
            }
            load
        })
        .collect();
    plan.selected = subset.iter().map(|&i| inst.candidates[i].task).collect();
    plan.selected.sort();
    plan.order = (0..=stops.len()).collect();
    plan.stops = stops;
    plan.total_cost = cost;
    Ok(plan)
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(items: &[usize], k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in from..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
        DistanceMatrix {
            locations: (0..n as u32).map(NodeId).collect(),
            m: (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { f(i, j) }).collect()).collect(),
            predecessors: None,
        }
    }

    fn instance(cost: DistanceMatrix, candidates: Vec<Candidate>, capacity: u32) -> RoutingInstance {
        RoutingInstance {
            robot: RobotId(0),
            start: NodeId(0),
            capability: vec![1.0, 1.0],
            capacity,
            candidates,
            onboard: Vec::new(),
            cost,
        }
    }

    fn cand(task: u32, ty: usize, o: u32, d: u32) -> Candidate {
        Candidate {
            task: TaskId(task),
            task_type: ty,
            pickup: NodeId(o),
            delivery: NodeId(d),
        }
    }

    #[test]
    fn single_task_route() {
        // 0 = start, 1 = pickup, 2 = delivery on a line
        let pos: &[f64] = &[0.0, 2.0, 5.0];
        let m = matrix(3, |i, j| (pos[i] - pos[j]).abs());
        let plan = select_and_route(&instance(m, vec![cand(7, 0, 1, 2)], 1)).unwrap();
        assert_eq!(plan.total_cost, 5.0);
        assert_eq!(
            plan.stops.iter().map(|s| s.node).collect::<Vec<_>>(),
            vec![NodeId(1), NodeId(2)]
        );
        plan.verify(1, 0).unwrap();
    }

    #[test]
    fn out_and_back() {
        let cost = vec![vec![0.0, 3.0], vec![3.0, 0.0]];
        // two stops at the same far location: pickup then delivery
        let r = route_exact(&cost, 0, &[1, 0], &[1, -1], &[(0, 1)], 1, 0).unwrap().unwrap();
        assert_eq!(r.cost, 6.0);
        assert_eq!(r.sequence, vec![0, 1]);
    }

    #[test]
    fn unit_costs_three_tasks() {
        let cost: Vec<Vec<f64>> = (0..7).map(|i| (0..7).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let locs: Vec<usize> = (1..7).collect();
        let r = route_exact(&cost, 0, &locs, &[1, -1, 1, -1, 1, -1], &[(0, 1), (2, 3), (4, 5)], 3, 0)
            .unwrap()
            .unwrap();
        assert_eq!(r.cost, 6.0);
    }

    #[test]
    fn precedence_cycle_is_rejected() {
        let cost = vec![vec![0.0; 3]; 3];
        let res = route_exact(&cost, 0, &[1, 2], &[0, 0], &[(0, 1), (1, 0)], 1, 0);
        assert!(matches!(res, Err(Error::Domain(_))));
    }

    #[test]
    fn capacity_forces_serial_visits() {
        // both pickups at 1, both deliveries at 2; capacity 1 forces o,d,o,d
        let pos: &[f64] = &[0.0, 1.0, 4.0];
        let m = matrix(3, |i, j| (pos[i] - pos[j]).abs());
        let plan = select_and_route(&instance(m.clone(), vec![cand(0, 0, 1, 2), cand(1, 0, 1, 2)], 1)).unwrap();
        assert_eq!(plan.selected.len(), 1);
        let r = route_exact(&m.m, 0, &[1, 2, 1, 2], &[1, -1, 1, -1], &[(0, 1), (2, 3)], 1, 0)
            .unwrap()
            .unwrap();
        assert_eq!(r.cost, 1.0 + 3.0 + 3.0 + 3.0);
        let r2 = route_exact(&m.m, 0, &[1, 2, 1, 2], &[1, -1, 1, -1], &[(0, 1), (2, 3)], 2, 0)
            .unwrap()
            .unwrap();
        assert_eq!(r2.cost, 4.0);
    }

    #[test]
    fn incompatible_and_unreachable_excluded() {
        let m = matrix(5, |i, j| if i == 4 || j == 4 { f64::INFINITY } else { 1.0 });
        let mut inst = instance(m, vec![cand(0, 0, 1, 2), cand(1, 1, 1, 3), cand(2, 0, 1, 4)], 3);
        inst.capability = vec![1.0, 0.0];
        let plan = select_and_route(&inst).unwrap();
        assert_eq!(plan.selected, vec![TaskId(0)]);
        assert_eq!(plan.excluded.len(), 2);
    }

    #[test]
    fn onboard_items_are_delivered() {
        let pos: &[f64] = &[0.0, 1.0, 2.0, 3.0];
        let m = matrix(4, |i, j| (pos[i] - pos[j]).abs());
        let mut inst = instance(m, vec![cand(1, 0, 1, 2), cand(2, 0, 1, 3)], 2);
        inst.onboard = vec![Onboard {
            task: TaskId(9),
            delivery: NodeId(3),
        }];
        let plan = select_and_route(&inst).unwrap();
        assert_eq!(plan.selected.len(), 1);
        assert!(plan.stops.iter().any(|s| s.task == TaskId(9) && s.kind == StopKind::Delivery));
        plan.verify(2, 1).unwrap();
    }

    #[test]
    fn empty_when_nothing_compatible() {
        let m = matrix(3, |_, _| 1.0);
        let mut inst = instance(m, vec![cand(0, 1, 1, 2)], 2);
        inst.capability = vec![1.0, 0.0];
        let plan = select_and_route(&inst).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.total_cost, 0.0);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 3), 10);
        assert_eq!(binomial(17, 5), 6188);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(binomial(0, 0), 1);
    }
}
