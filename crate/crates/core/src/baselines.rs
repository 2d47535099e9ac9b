//! Comparison allocators: k-means grouping, nearest-neighbor routing and the
//! consensus-based bundle algorithm (CBBA).

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::ids::{NodeId, RobotId, TaskId};
use crate::route_solver::{RoutePlan, RoutingInstance, Stop, StopKind};

pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

/// Lloyd's k-means on pickup coordinates with k-means++ seeding.
///
/// Points are processed in task-id order so the result depends only on the
/// point set and the RNG state. An empty cluster is re-seeded at the point
/// farthest from its current centroid. Groups come back sorted by smallest id.
pub fn kmeans_cluster<R: Rng>(points: &[(TaskId, Point)], k: usize, rng: &mut R) -> Vec<Vec<TaskId>> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut pts: Vec<(TaskId, Point)> = points.to_vec();
    pts.sort_by_key(|p| p.0);
    let k = k.min(pts.len());

    let mut centroids: Vec<Point> = Vec::with_capacity(k);
    centroids.push(pts[rng.gen_range(0..pts.len())].1);
    while centroids.len() < k {
        let weights: Vec<f64> = pts
            .iter()
            .map(|(_, p)| centroids.iter().map(|c| c.dist_sq(*p)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total <= 0.0 {
            // all remaining points coincide with centroids
            pts.iter().position(|(_, p)| !centroids.contains(p)).unwrap_or(0)
        } else {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = pts.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        };
        centroids.push(pts[pick].1);
    }

    let nearest = |p: Point, cs: &[Point]| {
        (0..cs.len())
            .min_by(|&a, &b| cs[a].dist_sq(p).total_cmp(&cs[b].dist_sq(p)).then(a.cmp(&b)))
            .unwrap()
    };
    let mut labels = vec![0usize; pts.len()];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        for (i, (_, p)) in pts.iter().enumerate() {
            labels[i] = nearest(*p, &centroids);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let members: Vec<Point> = pts
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|((_, p), _)| *p)
                .collect();
            let next = if members.is_empty() {
                let far = (0..pts.len())
                    .max_by(|&a, &b| {
                        let da = pts[a].1.dist_sq(centroids[labels[a]]);
                        let db = pts[b].1.dist_sq(centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                labels[far] = c;
                pts[far].1
            } else {
                crate::geometry::centroid(&members)
            };
            shift = shift.max(next.dist(centroids[c]));
            centroids[c] = next;
        }
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }
    for (i, (_, p)) in pts.iter().enumerate() {
        labels[i] = nearest(*p, &centroids);
    }
    let mut groups: Vec<Vec<TaskId>> = vec![Vec::new(); k];
    for (i, (id, _)) in pts.iter().enumerate() {
        groups[labels[i]].push(*id);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort();
    groups
}

/// Greedy nearest-neighbor routing over the instance's costs.
///
/// From the current location, go to the closest admissible stop: a pickup of
/// an unselected compatible candidate while capacity and the task budget
/// allow, or the delivery of anything carried. Ties go to the lower task id,
/// deliveries first.
pub fn nn_route(inst: &RoutingInstance) -> RoutePlan {
    let mut plan = RoutePlan::empty(inst.robot, inst.start);
    let d = |a: NodeId, b: NodeId| inst.cost.between(a, b);
    let mut carried: Vec<(TaskId, NodeId)> = inst
        .onboard
        .iter()
        .filter(|o| {
            let ok = d(inst.start, o.delivery).is_finite();
            if !ok {
                plan.excluded.push((o.task, "onboard delivery unreachable".into()));
            }
            ok
        })
        .map(|o| (o.task, o.delivery))
        .collect();
    let mut open: Vec<(TaskId, NodeId, NodeId)> = Vec::new();
    for c in &inst.candidates {
        if !inst.capability.get(c.task_type).is_some_and(|&u| u > 0.0) {
            plan.excluded.push((c.task, format!("robot cannot handle type {}", c.task_type)));
        } else if !d(inst.start, c.pickup).is_finite() || !d(c.pickup, c.delivery).is_finite() {
            plan.excluded.push((c.task, "unreachable".into()));
        } else {
            open.push((c.task, c.pickup, c.delivery));
        }
    }
    open.sort_by_key(|t| t.0);
    let budget = (inst.capacity as usize).saturating_sub(carried.len());
    let mut load = carried.len() as u32;
    let mut here = inst.start;
    let mut taken = 0usize;
    loop {
        // (cost, is_pickup, task, node, index)
        let mut best: Option<(f64, bool, TaskId, NodeId, usize)> = None;
        let mut consider = |cand: (f64, bool, TaskId, NodeId, usize)| {
            let better = match best {
                None => true,
                Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
            };
            if better {
                best = Some(cand);
            }
        };
        for (i, &(task, node)) in carried.iter().enumerate() {
            consider((d(here, node), false, task, node, i));
        }
        if load < inst.capacity && taken < budget {
            for (i, &(task, pickup, _)) in open.iter().enumerate() {
                consider((d(here, pickup), true, task, pickup, i));
            }
        }
        let Some((cost, is_pickup, task, node, idx)) = best else { break };
        plan.total_cost += cost;
        if is_pickup {
            let (_, _, delivery) = open.remove(idx);
            carried.push((task, delivery));
            plan.selected.push(task);
            load += 1;
            taken += 1;
            plan.stops.push(Stop {
                task,
                kind: StopKind::Pickup,
                node,
            });
        } else {
            carried.remove(idx);
            load -= 1;
            plan.stops.push(Stop {
                task,
                kind: StopKind::Delivery,
                node,
            });
        }
        plan.load_profile.push(load);
        here = node;
    }
    plan.selected.sort();
    plan.order = (0..=plan.stops.len()).collect();
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbbaTask {
    pub id: TaskId,
    pub task_type: usize,
    pub pickup: NodeId,
    pub delivery: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbbaAgent {
    pub id: RobotId,
    pub start: NodeId,
    pub capability: Vec<f64>,
    /// Bundle size limit.
    pub max_bundle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbbaResult {
    /// Tasks in the order they were added, per agent.
    pub bundles: Vec<Vec<TaskId>>,
    /// Tasks in execution order, per agent.
    pub paths: Vec<Vec<TaskId>>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Claim {
    bid: f64,
    agent: usize,
}

/// Consensus-based bundle algorithm over a fully connected network.
///
/// Agents serve tasks back to back (pickup then delivery). A bid is the
/// negative increase in path cost from inserting the task at its best
/// position. In each iteration the agents take turns: one extends its bundle
/// greedily against the current winning bids, then claims are reconciled
/// (highest bid wins, lower agent index on ties) and every outbid agent drops
/// the lost task and everything it added afterwards. Taking turns avoids the
/// livelock where two agents each lose the head of their bundle to the other.
/// Stops when an iteration changes nothing, or after `agents * tasks`
/// iterations with a warning.
pub fn cbba_allocate(tasks: &[CbbaTask], agents: &[CbbaAgent], dist: impl Fn(NodeId, NodeId) -> f64) -> CbbaResult {
    let mut sorted: Vec<&CbbaTask> = tasks.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let n_tasks = sorted.len();
    let n_agents = agents.len();
    let path_cost = |agent: &CbbaAgent, path: &[usize]| {
        let mut here = agent.start;
        let mut total = 0.0;
        for &j in path {
            total += dist(here, sorted[j].pickup) + dist(sorted[j].pickup, sorted[j].delivery);
            here = sorted[j].delivery;
        }
        total
    };

    let mut bundles: Vec<Vec<usize>> = vec![Vec::new(); n_agents];
    let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n_agents];
    let mut bids: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_agents];
    let mut winners: Vec<Option<Claim>> = vec![None; n_tasks];
    let max_iterations = (n_agents * n_tasks).max(2);
    let mut iterations = 0;
    let mut converged = false;

    // Highest claim wins each task; lower agent index on ties.
    let resolve = |bundles: &[Vec<usize>], bids: &[BTreeMap<usize, f64>]| {
        let mut table: Vec<Option<Claim>> = vec![None; n_tasks];
        for (i, bundle) in bundles.iter().enumerate() {
            for &j in bundle {
                let claim = Claim { bid: bids[i][&j], agent: i };
                let replace = match table[j] {
                    None => true,
                    Some(w) => claim.bid > w.bid || (claim.bid == w.bid && claim.agent < w.agent),
                };
                if replace {
                    table[j] = Some(claim);
                }
            }
        }
        table
    };

    while iterations < max_iterations {
        iterations += 1;
        let before = bundles.clone();

        // Agents take turns: build against the current winners, then every
        // outbid agent drops the lost task and everything it added after it.
        for (i, agent) in agents.iter().enumerate() {
            while bundles[i].len() < agent.max_bundle {
                let base = path_cost(agent, &paths[i]);
                let mut best: Option<(f64, usize, usize)> = None;
                for j in 0..n_tasks {
                    if bundles[i].contains(&j) || !agent.capability.get(sorted[j].task_type).is_some_and(|&c| c > 0.0) {
                        continue;
                    }
                    let mut gain = f64::NEG_INFINITY;
                    let mut at = 0;
                    for pos in 0..=paths[i].len() {
                        let mut trial = paths[i].clone();
                        trial.insert(pos, j);
                        let g = base - path_cost(agent, &trial);
                        if g > gain {
                            gain = g;
                            at = pos;
                        }
                    }
                    if !gain.is_finite() {
                        continue;
                    }
                    let beats = match winners[j] {
                        None => true,
                        Some(w) => gain > w.bid || (gain == w.bid && i < w.agent),
                    };
                    if beats && best.map_or(true, |b| gain > b.0) {
                        best = Some((gain, j, at));
                    }
                }
                let Some((gain, j, at)) = best else { break };
                bundles[i].push(j);
                paths[i].insert(at, j);
                bids[i].insert(j, gain);
                winners[j] = Some(Claim { bid: gain, agent: i });
            }
            for k in 0..n_agents {
                if let Some(cut) = bundles[k]
                    .iter()
                    .position(|&j| winners[j].map(|w| w.agent) != Some(k))
                {
                    for j in bundles[k].split_off(cut) {
                        bids[k].remove(&j);
                        paths[k].retain(|&p| p != j);
                    }
                }
            }
            winners = resolve(&bundles, &bids);
        }

        if bundles == before {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("CBBA did not converge within {max_iterations} iterations");
    }
    CbbaResult {
        bundles: bundles
            .iter()
            .map(|b| b.iter().map(|&j| sorted[j].id).collect())
            .collect(),
        paths: paths
            .iter()
            .map(|p| p.iter().map(|&j| sorted[j].id).collect())
            .collect(),
        iterations,
        converged,
    }
}
