//! One allocation round: turn idle robots and unassigned tasks into routes.
//!
//! Every allocator sees the same input and returns one route plan per robot,
//! so the executor can swap them freely.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{auction, score, Robot, ScoreMatrix};
use crate::baselines::{cbba_allocate, kmeans_cluster, nn_route, CbbaAgent, CbbaTask};
use crate::clustering::{build_clusters, choose_k, Cluster, Task};
use crate::error::Result;
use crate::ids::{NodeId, RobotId, TaskId};
use crate::roadmap::{DistanceMatrix, Roadmap};
use crate::route_solver::{select_and_route, Candidate, Onboard, RoutePlan, RoutingInstance, Stop, StopKind};
pub use crate::scenario::AllocatorKind;

/// A robot taking part in a round, with whatever it still carries.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotView {
    pub robot: Robot,
    pub onboard: Vec<Onboard>,
}

pub struct RoundInput<'a> {
    pub robots: &'a [RobotView],
    /// Unassigned tasks.
    pub tasks: &'a [Task],
    pub rm: &'a Roadmap,
    pub n_types: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundOutput {
    /// One plan per input robot, same order.
    pub plans: Vec<RoutePlan>,
    pub clusters: Vec<Vec<TaskId>>,
    pub scores: Option<ScoreMatrix>,
    /// (robot, cluster index) pairs from the auction.
    pub assignment: Vec<(RobotId, usize)>,
    pub warnings: Vec<String>,
}

pub trait Allocator: Send {
    fn kind(&self) -> AllocatorKind;
    fn allocate(&mut self, input: &RoundInput) -> Result<RoundOutput>;
}

pub fn make_allocator(kind: AllocatorKind, seed: u64) -> Box<dyn Allocator> {
    match kind {
        AllocatorKind::Oath => Box::new(OathAllocator),
        AllocatorKind::Cbba => Box::new(CbbaAllocator),
        AllocatorKind::Kan | AllocatorKind::Kam => Box::new(KmeansAllocator {
            exact: kind == AllocatorKind::Kam,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }),
    }
}

/// Shortest-path distances among robot positions, task sites and onboard deliveries.
pub fn site_matrix(input: &RoundInput) -> Result<DistanceMatrix> {
    let mut nodes = BTreeSet::new();
    for r in input.robots {
        nodes.insert(r.robot.position);
        nodes.extend(r.onboard.iter().map(|o| o.delivery));
    }
    for t in input.tasks {
        nodes.insert(t.pickup);
        nodes.insert(t.delivery);
    }
    let nodes: Vec<NodeId> = nodes.into_iter().collect();
    input.rm.distance_matrix(&nodes)
}

fn instance(view: &RobotView, tasks: &[&Task], full: &DistanceMatrix) -> Result<RoutingInstance> {
    let mut nodes = BTreeSet::from([view.robot.position]);
    nodes.extend(view.onboard.iter().map(|o| o.delivery));
    for t in tasks {
        nodes.insert(t.pickup);
        nodes.insert(t.delivery);
    }
    let nodes: Vec<NodeId> = nodes.into_iter().collect();
    Ok(RoutingInstance {
        robot: view.robot.id,
        start: view.robot.position,
        capability: view.robot.capability.clone(),
        capacity: view.robot.capacity,
        candidates: tasks
            .iter()
            .map(|t| Candidate {
                task: t.id,
                task_type: t.task_type,
                pickup: t.pickup,
                delivery: t.delivery,
            })
            .collect(),
        onboard: view.onboard.clone(),
        cost: full.restrict(&nodes)?,
    })
}

fn euclidean(rm: &Roadmap, nodes: &[NodeId]) -> DistanceMatrix {
    DistanceMatrix {
        locations: nodes.to_vec(),
        m: nodes
            .iter()
            .map(|&a| nodes.iter().map(|&b| rm.position(a).dist(rm.position(b))).collect())
            .collect(),
        predecessors: None,
    }
}

/// Cluster count for a round with these participants.
fn round_k(input: &RoundInput) -> usize {
    choose_k(input.tasks.len(), input.robots.len().max(1))
}

fn route_assigned(
    input: &RoundInput,
    clusters: &[Cluster],
    scores: &ScoreMatrix,
    full: &DistanceMatrix,
    route: impl Fn(&RoutingInstance) -> Result<RoutePlan>,
) -> Result<RoundOutput> {
    let result = auction(scores);
    let mut out = RoundOutput {
        clusters: clusters.iter().map(|c| c.task_ids.clone()).collect(),
        ..Default::default()
    };
    for (r, view) in input.robots.iter().enumerate() {
        let members: Vec<&Task> = match result.assignment.get(&r) {
            Some(&k) => {
                out.assignment.push((view.robot.id, k));
                input
                    .tasks
                    .iter()
                    .filter(|t| clusters[k].task_ids.contains(&t.id))
                    .collect()
            }
            None => Vec::new(),
        };
        if members.is_empty() && view.onboard.is_empty() {
            out.plans.push(RoutePlan::empty(view.robot.id, view.robot.position));
            continue;
        }
        let inst = instance(view, &members, full)?;
        let plan = route(&inst)?;
        if !plan.exact {
            out.warnings
                .push(format!("robot {} route selection fell back to local search", view.robot.id));
        }
        out.plans.push(plan);
    }
    out.scores = Some(scores.clone());
    Ok(out)
}

fn robots_of(input: &RoundInput) -> Vec<Robot> {
    input.robots.iter().map(|v| v.robot.clone()).collect()
}

/// Roadmap-distance clustering, specialization-weighted auction, exact routing.
pub struct OathAllocator;

impl Allocator for OathAllocator {
    fn kind(&self) -> AllocatorKind {
        AllocatorKind::Oath
    }

    fn allocate(&mut self, input: &RoundInput) -> Result<RoundOutput> {
        let full = site_matrix(input)?;
        let clusters = if input.tasks.is_empty() {
            Vec::new()
        } else {
            build_clusters(input.tasks, &full, round_k(input), input.rm, input.n_types, input.theta)?
        };
        let scores = score(&robots_of(input), &clusters, input.rm)?;
        route_assigned(input, &clusters, &scores, &full, select_and_route)
    }
}

/// k-means on pickup coordinates, Euclidean scores without specialization,
/// then nearest-neighbor (KAN) or exact (KAM) routing.
pub struct KmeansAllocator {
    pub exact: bool,
    rng: ChaCha8Rng,
}

impl Allocator for KmeansAllocator {
    fn kind(&self) -> AllocatorKind {
        if self.exact {
            AllocatorKind::Kam
        } else {
            AllocatorKind::Kan
        }
    }

    fn allocate(&mut self, input: &RoundInput) -> Result<RoundOutput> {
        let full = site_matrix(input)?;
        let points: Vec<(TaskId, crate::geometry::Point)> =
            input.tasks.iter().map(|t| (t.id, input.rm.position(t.pickup))).collect();
        let groups = kmeans_cluster(&points, round_k(input), &mut self.rng);
        let clusters: Vec<Cluster> = groups
            .iter()
            .enumerate()
            .map(|(k, ids)| {
                let members: Vec<&Task> = input.tasks.iter().filter(|t| ids.contains(&t.id)).collect();
                Cluster::from_members(k, &members, input.rm, input.n_types, input.theta)
            })
            .collect();
        let robots = robots_of(input);
        let dist = robots
            .iter()
            .map(|r| {
                let here = input.rm.position(r.position);
                clusters.iter().map(|c| here.dist(c.center)).collect()
            })
            .collect();
        let gamma = vec![vec![1.0; clusters.len()]; robots.len()];
        let scores = ScoreMatrix::assemble(&robots, &clusters, dist, gamma);
        if self.exact {
            route_assigned(input, &clusters, &scores, &full, select_and_route)
        } else {
            let rm = input.rm;
            route_assigned(input, &clusters, &scores, &full, |inst| {
                let mut e = inst.clone();
                let reach = |a: NodeId, b: NodeId| inst.cost.between(a, b).is_finite();
                let mut dropped = Vec::new();
                e.candidates.retain(|c| {
                    let ok = reach(inst.start, c.pickup) && reach(c.pickup, c.delivery);
                    if !ok {
                        dropped.push((c.task, "unreachable".to_string()));
                    }
                    ok
                });
                e.onboard.retain(|o| reach(inst.start, o.delivery));
                e.cost = euclidean(rm, &inst.cost.locations);
                let mut plan = nn_route(&e);
                plan.excluded.extend(dropped);
                // keep reachability decisions consistent with the roadmap
                let reachable = |a: NodeId, b: NodeId| inst.cost.between(a, b).is_finite();
                let mut here = inst.start;
                for s in &plan.stops {
                    if !reachable(here, s.node) {
                        let mut fallback = inst.clone();
                        fallback.candidates.clear();
                        let mut p = nn_route(&fallback);
                        p.excluded.push((s.task, "unreachable on the roadmap".into()));
                        return Ok(p);
                    }
                    here = s.node;
                }
                plan.total_cost = travel_cost(inst.start, &plan.stops, &inst.cost);
                Ok(plan)
            })
        }
    }
}

fn travel_cost(start: NodeId, stops: &[Stop], cost: &DistanceMatrix) -> f64 {
    let mut here = start;
    let mut total = 0.0;
    for s in stops {
        total += cost.between(here, s.node);
        here = s.node;
    }
    total
}

/// Task-level consensus bundles; each task is carried straight from pickup to delivery.
pub struct CbbaAllocator;

impl Allocator for CbbaAllocator {
    fn kind(&self) -> AllocatorKind {
        AllocatorKind::Cbba
    }

    fn allocate(&mut self, input: &RoundInput) -> Result<RoundOutput> {
        let full = site_matrix(input)?;
        let mut out = RoundOutput::default();
        // Onboard items are dropped off first, nearest first.
        let mut heads: Vec<(NodeId, Vec<Stop>, f64)> = Vec::new();
        let mut agents = Vec::new();
        for view in input.robots {
            let mut here = view.robot.position;
            let mut stops = Vec::new();
            let mut pending: Vec<&Onboard> = view.onboard.iter().collect();
            let mut cost = 0.0;
            while !pending.is_empty() {
                let (i, d) = pending
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (i, full.between(here, o.delivery)))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .unwrap();
                let o = pending.remove(i);
                if !d.is_finite() {
                    continue;
                }
                cost += d;
                here = o.delivery;
                stops.push(Stop {
                    task: o.task,
                    kind: StopKind::Delivery,
                    node: o.delivery,
                });
            }
            agents.push(CbbaAgent {
                id: view.robot.id,
                start: here,
                capability: view.robot.capability.clone(),
                max_bundle: view.robot.capacity as usize,
            });
            heads.push((here, stops, cost));
        }
        let tasks: Vec<CbbaTask> = input
            .tasks
            .iter()
            .filter(|t| full.between(t.pickup, t.delivery).is_finite())
            .map(|t| CbbaTask {
                id: t.id,
                task_type: t.task_type,
                pickup: t.pickup,
                delivery: t.delivery,
            })
            .collect();
        let result = cbba_allocate(&tasks, &agents, |a, b| full.between(a, b));
        if !result.converged {
            out.warnings
                .push(format!("consensus did not converge in {} iterations", result.iterations));
        }
        for (i, view) in input.robots.iter().enumerate() {
            let (mut here, head, mut cost) = heads[i].clone();
            let initial = head.len() as u32;
            let mut plan = RoutePlan::empty(view.robot.id, view.robot.position);
            plan.stops = head;
            let mut load = initial;
            plan.load_profile = (0..plan.stops.len())
                .map(|_| {
                    load -= 1;
                    load
                })
                .collect();
            for &task in &result.paths[i] {
                let t = tasks.iter().find(|t| t.id == task).unwrap();
                let leg = full.between(here, t.pickup) + full.between(t.pickup, t.delivery);
                if !leg.is_finite() {
                    continue;
                }
                cost += leg;
                here = t.delivery;
                plan.selected.push(task);
                plan.stops.push(Stop {
                    task,
                    kind: StopKind::Pickup,
                    node: t.pickup,
                });
                plan.load_profile.push(1);
                plan.stops.push(Stop {
                    task,
                    kind: StopKind::Delivery,
                    node: t.delivery,
                });
                plan.load_profile.push(0);
            }
            plan.selected.sort();
            plan.total_cost = cost;
            plan.order = (0..=plan.stops.len()).collect();
            out.plans.push(plan);
        }
        out.clusters = result.paths.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    /// Grid roadmap 0..n x 0..n with unit spacing.
    fn grid(n: u32) -> Roadmap {
        let pts: Vec<Point> = (0..n * n).map(|i| Point::new((i % n) as f64, (i / n) as f64)).collect();
        let mut edges = Vec::new();
        for i in 0..n * n {
            if i % n + 1 < n {
                edges.push((i, i + 1));
            }
            if i / n + 1 < n {
                edges.push((i, i + n));
            }
        }
        Roadmap::with_edges(&pts, &edges)
    }

    fn view(id: u32, at: u32, cap: Vec<f64>, q: u32) -> RobotView {
        RobotView {
            robot: Robot::new(id, NodeId(at), cap, q),
            onboard: Vec::new(),
        }
    }

    fn run_all(input: &RoundInput) {
        for kind in AllocatorKind::ALL {
            let mut a = make_allocator(kind, 7);
            let out = a.allocate(input).unwrap();
            assert_eq!(out.plans.len(), input.robots.len(), "{kind}");
            let mut seen = BTreeSet::new();
            for (plan, v) in out.plans.iter().zip(input.robots) {
                plan.verify(v.robot.capacity, v.onboard.len() as u32).unwrap();
                for t in &plan.selected {
                    assert!(seen.insert(*t), "{kind}: task {t} given twice");
                    let task = input.tasks.iter().find(|x| x.id == *t).unwrap();
                    assert!(v.robot.can_handle(task.task_type), "{kind}: incompatible task");
                }
            }
        }
    }

    #[test]
    fn every_allocator_gives_disjoint_feasible_plans() {
        let rm = grid(6);
        let tasks: Vec<Task> = (0..8)
            .map(|i| Task::new(i, NodeId(i * 4 % 36), NodeId(35 - i), (i % 2) as usize))
            .collect();
        let robots = vec![
            view(0, 0, vec![1.0, 0.0], 2),
            view(1, 5, vec![0.0, 1.0], 2),
            view(2, 30, vec![1.0, 1.0], 3),
        ];
        run_all(&RoundInput {
            robots: &robots,
            tasks: &tasks,
            rm: &rm,
            n_types: 2,
            theta: 0.1,
        });
    }

    #[test]
    fn onboard_items_are_delivered_without_new_tasks() {
        let rm = grid(4);
        let mut v = view(0, 0, vec![1.0], 2);
        v.onboard.push(Onboard {
            task: TaskId(9),
            delivery: NodeId(15),
        });
        let robots = vec![v];
        for kind in AllocatorKind::ALL {
            let out = make_allocator(kind, 1)
                .allocate(&RoundInput {
                    robots: &robots,
                    tasks: &[],
                    rm: &rm,
                    n_types: 1,
                    theta: 0.1,
                })
                .unwrap();
            assert_eq!(out.plans[0].stops.len(), 1, "{kind}");
            assert_eq!(out.plans[0].stops[0].node, NodeId(15));
            assert_eq!(out.plans[0].total_cost, 6.0);
        }
    }
}
