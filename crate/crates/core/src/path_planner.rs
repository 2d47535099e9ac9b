//! Order-constrained path planning with incremental repair.
//!
//! A robot's route is a sequence of goal nodes to visit in order, while
//! staying off other robots' goal sites. The sequencing automaton has one
//! state per number of goals reached; its product with the roadmap is
//! searched backwards from the accepting state with D*-Lite, so edge changes
//! only touch the affected product states instead of forcing a fresh search.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::NodeId;
use crate::roadmap::{Edge, Roadmap};
use crate::route_solver::RoutePlan;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequencingSpec {
    /// Nodes to reach in order. Consecutive repeats are satisfied by one arrival.
    pub goals: Vec<NodeId>,
    pub avoid: BTreeSet<NodeId>,
}

impl SequencingSpec {
    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    /// Automaton states: one per prefix of reached goals.
    pub fn automaton_states(&self) -> usize {
        self.goals.len() + 1
    }

    /// Progress after arriving at `node` with `progress` goals already reached.
    pub fn advance(&self, mut progress: usize, node: NodeId) -> usize {
        while progress < self.goals.len() && self.goals[progress] == node {
            progress += 1;
        }
        progress
    }

    fn may_enter(&self, progress: usize, node: NodeId) -> bool {
        !self.avoid.contains(&node) || self.goals.get(progress) == Some(&node)
    }
}

/// Goals from the plan's stops; avoid the other robots' goal sites.
///
/// Sites that are both our goals and someone else's stay goals; they are
/// returned as conflicts.
pub fn build_spec(plan: &RoutePlan, others: &BTreeSet<NodeId>) -> (SequencingSpec, Vec<NodeId>) {
    let goals: Vec<NodeId> = plan.stops.iter().map(|s| s.node).collect();
    let own: BTreeSet<NodeId> = goals.iter().copied().collect();
    let conflicts = others.intersection(&own).copied().collect();
    let avoid = others.difference(&own).copied().collect();
    (SequencingSpec { goals, avoid }, conflicts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState {
    pub node: NodeId,
    pub progress: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub path: Vec<NodeId>,
    pub cost: f64,
    /// Goals reached along `path`.
    pub reached: usize,
    pub complete: bool,
    /// First goal that cannot be reached, when incomplete.
    pub blocked_goal: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerStats {
    pub expansions: usize,
    pub replans: usize,
    /// Product states with a stored value.
    pub touched_states: usize,
    /// |V| * (L + 1) at the last computation.
    pub product_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, f64);

impl Key {
    fn cmp(&self, other: &Key) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.total_cmp(&other.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    key: Key,
    state: ProductState,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (key, state)
        other.key.cmp(&self.key).then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// D*-Lite search state for one robot.
#[derive(Debug, Clone)]
pub struct PlannerHandle {
    spec: SequencingSpec,
    start: ProductState,
    last: ProductState,
    goal: ProductState,
    km: f64,
    g: HashMap<ProductState, f64>,
    rhs: HashMap<ProductState, f64>,
    open: HashMap<ProductState, Key>,
    queue: BinaryHeap<QueueEntry>,
    stats: PlannerStats,
}

impl PlannerHandle {
    /// Plans from `start` and keeps the search state for later repairs.
    pub fn plan(spec: SequencingSpec, rm: &Roadmap, start: NodeId) -> Result<(Self, PlanOutcome)> {
        if !rm.contains(start) {
            return Err(Error::Domain(format!("start node {start} is not in the roadmap")));
        }
        let start_state = ProductState {
            node: start,
            progress: spec.advance(0, start),
        };
        let goal = match spec.goals.last() {
            Some(&g) => ProductState {
                node: g,
                progress: spec.len(),
            },
            None => start_state,
        };
        let mut handle = Self {
            spec,
            start: start_state,
            last: start_state,
            goal,
            km: 0.0,
            g: HashMap::new(),
            rhs: HashMap::new(),
            open: HashMap::new(),
            queue: BinaryHeap::new(),
            stats: PlannerStats::default(),
        };
        handle.rhs.insert(goal, 0.0);
        let key = handle.calculate_key(rm, goal);
        handle.push(goal, key);
        let outcome = handle.compute(rm);
        Ok((handle, outcome))
    }

    pub fn spec(&self) -> &SequencingSpec {
        &self.spec
    }

    pub fn start(&self) -> ProductState {
        self.start
    }

    pub fn stats(&self) -> PlannerStats {
        self.stats
    }

    /// Moves the search start after the robot arrives at `node`.
    pub fn move_to(&mut self, rm: &Roadmap, node: NodeId) {
        let next = ProductState {
            node,
            progress: self.spec.advance(self.start.progress, node),
        };
        self.start = next;
        self.km += self.h(rm, self.last, next);
        self.last = next;
    }

    /// Repairs the search after the given roadmap edges changed, then returns the new path.
    pub fn notify_changes(&mut self, rm: &Roadmap, changed: &[Edge]) -> PlanOutcome {
        if !changed.is_empty() {
            self.stats.replans += 1;
        }
        let levels = self.spec.len();
        for &(a, b) in changed {
            for node in [a, b] {
                for progress in 0..=levels {
                    self.update_vertex(rm, ProductState { node, progress });
                }
            }
        }
        self.compute(rm)
    }

    /// Current best path without further search.
    pub fn current_path(&self, rm: &Roadmap) -> PlanOutcome {
        self.extract(rm)
    }

    fn g(&self, s: ProductState) -> f64 {
        self.g.get(&s).copied().unwrap_or(f64::INFINITY)
    }

    fn rhs(&self, s: ProductState) -> f64 {
        self.rhs.get(&s).copied().unwrap_or(f64::INFINITY)
    }

    fn h(&self, rm: &Roadmap, a: ProductState, b: ProductState) -> f64 {
        rm.position(a.node).dist(rm.position(b.node))
    }

    fn calculate_key(&self, rm: &Roadmap, s: ProductState) -> Key {
        let m = self.g(s).min(self.rhs(s));
        Key(m + self.h(rm, self.start, s) + self.km, m)
    }

    fn push(&mut self, s: ProductState, key: Key) {
        self.open.insert(s, key);
        self.queue.push(QueueEntry { key, state: s });
    }

    fn top(&mut self) -> Option<QueueEntry> {
        while let Some(top) = self.queue.peek().copied() {
            if self.open.get(&top.state) == Some(&top.key) {
                return Some(top);
            }
            self.queue.pop();
        }
        None
    }

    /// Forward transitions of the product graph.
    fn successors(&self, rm: &Roadmap, s: ProductState) -> Vec<(ProductState, f64)> {
        if s.progress >= self.spec.len() {
            return Vec::new();
        }
        rm.neighbors(s.node)
            .iter()
            .filter(|(v, _)| self.spec.may_enter(s.progress, *v))
            .map(|&(v, w)| {
                (
                    ProductState {
                        node: v,
                        progress: self.spec.advance(s.progress, v),
                    },
                    w,
                )
            })
            .collect()
    }

    /// Product states with a transition into `s`.
    fn predecessors(&self, rm: &Roadmap, s: ProductState) -> Vec<ProductState> {
        let goals = &self.spec.goals;
        let levels = goals.len();
        let v = s.node;
        let q = s.progress;
        let mut sources = Vec::new();
        if q < levels && goals[q] != v {
            sources.push(q);
        }
        if q > 0 && goals[q - 1] == v && (q == levels || goals[q] != v) {
            let mut p = q;
            while p > 0 && goals[p - 1] == v {
                p -= 1;
                sources.push(p);
            }
        }
        let mut out = Vec::new();
        for &p in &sources {
            if !self.spec.may_enter(p, v) {
                continue;
            }
            for &(u, _) in rm.neighbors(v) {
                out.push(ProductState { node: u, progress: p });
            }
        }
        out
    }

    fn update_vertex(&mut self, rm: &Roadmap, u: ProductState) {
        if u != self.goal {
            let best = self
                .successors(rm, u)
                .into_iter()
                .map(|(s, w)| w + self.g(s))
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() || self.rhs.contains_key(&u) {
                self.rhs.insert(u, best);
            }
        }
        self.open.remove(&u);
        if self.g(u) != self.rhs(u) {
            let key = self.calculate_key(rm, u);
            self.push(u, key);
        }
    }

    fn compute(&mut self, rm: &Roadmap) -> PlanOutcome {
        loop {
            let Some(top) = self.top() else { break };
            let start_key = self.calculate_key(rm, self.start);
            if top.key.cmp(&start_key) != Ordering::Less && self.rhs(self.start) == self.g(self.start) {
                break;
            }
            let u = top.state;
            self.queue.pop();
            self.open.remove(&u);
            let new_key = self.calculate_key(rm, u);
            if top.key.cmp(&new_key) == Ordering::Less {
                self.push(u, new_key);
            } else if self.g(u) > self.rhs(u) {
                self.stats.expansions += 1;
                self.g.insert(u, self.rhs(u));
                for p in self.predecessors(rm, u) {
                    self.update_vertex(rm, p);
                }
            } else {
                self.stats.expansions += 1;
                self.g.insert(u, f64::INFINITY);
                for p in self.predecessors(rm, u) {
                    self.update_vertex(rm, p);
                }
                self.update_vertex(rm, u);
            }
        }
        self.stats.touched_states = self.g.len().max(self.rhs.len());
        self.stats.product_states = rm.node_count() * self.spec.automaton_states();
        self.extract(rm)
    }

    fn extract(&self, rm: &Roadmap) -> PlanOutcome {
        let total = self.g(self.start).min(self.rhs(self.start));
        if self.start == self.goal || self.start.progress >= self.spec.len() {
            return PlanOutcome {
                path: vec![self.start.node],
                cost: 0.0,
                reached: self.spec.len(),
                complete: true,
                blocked_goal: None,
            };
        }
        if !total.is_finite() {
            return self.partial(rm);
        }
        let mut path = vec![self.start.node];
        let mut cur = self.start;
        let mut cost = 0.0;
        let limit = rm.capacity() * self.spec.automaton_states() + 1;
        while cur != self.goal && path.len() <= limit {
            let next = self
                .successors(rm, cur)
                .into_iter()
                .map(|(s, w)| (w + self.g(s), w, s))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
            match next {
                Some((total, w, s)) if total.is_finite() => {
                    cost += w;
                    path.push(s.node);
                    cur = s;
                }
                _ => return self.partial(rm),
            }
        }
        PlanOutcome {
            path,
            cost,
            reached: self.spec.len(),
            complete: true,
            blocked_goal: None,
        }
    }

    /// Cheapest path to the furthest reachable prefix of goals.
    fn partial(&self, rm: &Roadmap) -> PlanOutcome {
        let mut dist: HashMap<ProductState, f64> = HashMap::new();
        let mut parent: HashMap<ProductState, ProductState> = HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(self.start, 0.0);
        heap.push(QueueEntry {
            key: Key(0.0, 0.0),
            state: self.start,
        });
        let mut best = self.start;
        while let Some(QueueEntry { key, state }) = heap.pop() {
            if key.0 > dist[&state] {
                continue;
            }
            if state.progress > best.progress {
                best = state;
            }
            for (next, w) in self.successors(rm, state) {
                let nd = key.0 + w;
                if dist.get(&next).map_or(true, |&d| nd < d) {
                    dist.insert(next, nd);
                    parent.insert(next, state);
                    heap.push(QueueEntry {
                        key: Key(nd, 0.0),
                        state: next,
                    });
                }
            }
        }
        let mut path = vec![best.node];
        let mut cur = best;
        while let Some(&p) = parent.get(&cur) {
            path.push(p.node);
            cur = p;
        }
        path.reverse();
        PlanOutcome {
            path,
            cost: dist[&best],
            reached: best.progress,
            complete: false,
            blocked_goal: self.spec.goals.get(best.progress).copied(),
        }
    }
}
