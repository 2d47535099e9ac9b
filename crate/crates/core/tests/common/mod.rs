//! Reference implementations and instance builders shared by the integration tests.
//!
//! The oracles are deliberately naive: dense Floyd-Warshall, exhaustive
//! subset and permutation enumeration, and plain Dijkstra over an explicitly
//! built product graph.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use mrta_core::geometry::Point;
use mrta_core::roadmap::{DistanceMatrix, Roadmap};
use mrta_core::route_solver::{Candidate, Onboard, RoutingInstance};
use mrta_core::workspace::{Obstacle, ObstacleKind, Workspace};
use mrta_core::{NodeId, RobotId, TaskId};
use rand::Rng;

/// All-pairs shortest paths over the live nodes, in `rm.node_ids()` order.
pub fn floyd_warshall(rm: &Roadmap) -> (Vec<NodeId>, Vec<Vec<f64>>) {
    let ids: Vec<NodeId> = rm.node_ids().collect();
    let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let n = ids.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
    }
    for (a, b, w) in rm.edges() {
        let (i, j) = (index[&a], index[&b]);
        d[i][j] = d[i][j].min(w);
        d[j][i] = d[j][i].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    (ids, d)
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, width: f64, height: f64) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.gen_range(0.0..width), rng.gen_range(0.0..height)))
        .collect()
}

/// Axis-aligned rectangles that leave the given points outside.
pub fn random_walls<R: Rng>(rng: &mut R, count: usize, width: f64, height: f64) -> Vec<Obstacle> {
    (0..count)
        .map(|i| {
            let horizontal = rng.gen_bool(0.5);
            let (w, h) = if horizontal {
                (rng.gen_range(1.0..width / 2.0), 0.3)
            } else {
                (0.3, rng.gen_range(1.0..height / 2.0))
            };
            let x = rng.gen_range(0.0..width - w);
            let y = rng.gen_range(0.0..height - h);
            Obstacle::rect(i as u32, Point::new(x, y), Point::new(x + w, y + h), ObstacleKind::Wall, true)
        })
        .collect()
}

/// Random roadmap with up to `max_nodes` nodes in a walled world, with some
/// edges knocked out so there are several components now and then.
pub fn random_roadmap<R: Rng>(rng: &mut R, max_nodes: usize) -> Roadmap {
    let (width, height) = (20.0, 20.0);
    let n_walls = rng.gen_range(0..5);
    let walls = random_walls(rng, n_walls, width, height);
    let ws = Workspace::new(width, height, walls).unwrap();
    let n = rng.gen_range(5..=max_nodes);
    let mut pts = Vec::new();
    while pts.len() < n {
        let p = Point::new(rng.gen_range(0.0..width), rng.gen_range(0.0..height));
        if !ws.inside_obstacle(p, false) {
            pts.push(p);
        }
    }
    let mut rm = Roadmap::from_points(&pts, &ws).unwrap();
    let edges: Vec<(NodeId, NodeId)> = rm.edges().map(|(a, b, _)| (a, b)).collect();
    for (a, b) in edges {
        if rng.gen_bool(0.1) {
            rm.remove_edge(a, b);
        }
    }
    rm
}

/// Best (count, cost) over every compatible subset within the free capacity
/// and every precedence- and capacity-feasible ordering of its stops.
pub fn brute_force_route(inst: &RoutingInstance) -> (usize, f64) {
    let d = |a: NodeId, b: NodeId| inst.cost.between(a, b);
    let eligible: Vec<&Candidate> = inst
        .candidates
        .iter()
        .filter(|c| inst.capability.get(c.task_type).is_some_and(|&u| u > 0.0))
        .collect();
    let free = (inst.capacity as usize).saturating_sub(inst.onboard.len());
    let mut best = (0usize, f64::INFINITY);
    for mask in 0u32..(1 << eligible.len()) {
        let chosen: Vec<&Candidate> = (0..eligible.len()).filter(|i| mask >> i & 1 == 1).map(|i| eligible[i]).collect();
        if chosen.len() > free {
            continue;
        }
        let cost = best_order(inst, &chosen, &d);
        if !cost.is_finite() {
            continue;
        }
        let better = chosen.len() > best.0 || (chosen.len() == best.0 && cost < best.1);
        if better {
            best = (chosen.len(), cost);
        }
    }
    best
}

#[derive(Clone, Copy)]
enum OracleStop {
    Pick(usize),
    Drop(usize),
    Onboard(usize),
}

fn best_order(inst: &RoutingInstance, chosen: &[&Candidate], d: &impl Fn(NodeId, NodeId) -> f64) -> f64 {
    let mut stops = Vec::new();
    for i in 0..chosen.len() {
        stops.push(OracleStop::Pick(i));
        stops.push(OracleStop::Drop(i));
    }
    for i in 0..inst.onboard.len() {
        stops.push(OracleStop::Onboard(i));
    }
    let node = |s: OracleStop| match s {
        OracleStop::Pick(i) => chosen[i].pickup,
        OracleStop::Drop(i) => chosen[i].delivery,
        OracleStop::Onboard(i) => inst.onboard[i].delivery,
    };
    let mut best = f64::INFINITY;
    permute(&mut stops, 0, &mut |order| {
        let mut picked = vec![false; chosen.len()];
        let mut load = inst.onboard.len() as i64;
        let mut at = inst.start;
        let mut cost = 0.0;
        for &s in order {
            match s {
                OracleStop::Pick(i) => {
                    picked[i] = true;
                    load += 1;
                }
                OracleStop::Drop(i) => {
                    if !picked[i] {
                        return;
                    }
                    load -= 1;
                }
                OracleStop::Onboard(_) => load -= 1,
            }
            if load > inst.capacity as i64 {
                return;
            }
            cost += d(at, node(s));
            at = node(s);
        }
        if cost < best {
            best = cost;
        }
    });
    best
}

fn permute<T: Copy>(items: &mut Vec<T>, k: usize, visit: &mut impl FnMut(&[T])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Random routing instance with Euclidean costs over two mutually unreachable
/// groups of locations (so the triangle inequality holds), up to `max_tasks`
/// candidates, mixed task types, and sometimes items already on board.
pub fn random_routing_instance<R: Rng>(rng: &mut R, max_tasks: usize) -> RoutingInstance {
    let n_tasks = rng.gen_range(0..=max_tasks);
    let n_onboard = rng.gen_range(0..=2usize);
    let n_locs = 1 + 2 * n_tasks + n_onboard;
    let group: Vec<u8> = (0..n_locs).map(|i| if i == 0 || rng.gen_bool(0.85) { 0 } else { 1 }).collect();
    let pts = random_points(rng, n_locs, 10.0, 10.0);
    // shared sites now and then, like a common delivery room
    let mut pts = pts;
    for i in 1..n_locs {
        if rng.gen_bool(0.15) {
            let j = rng.gen_range(0..n_locs);
            if group[i] == group[j] {
                pts[i] = pts[j];
            }
        }
    }
    let m: Vec<Vec<f64>> = (0..n_locs)
        .map(|i| {
            (0..n_locs)
                .map(|j| if group[i] != group[j] { f64::INFINITY } else { pts[i].dist(pts[j]) })
                .collect()
        })
        .collect();
    let locations: Vec<NodeId> = (0..n_locs as u32).map(NodeId).collect();
    let n_types = 2;
    let capability = match rng.gen_range(0..3) {
        0 => vec![1.0, 1.0],
        1 => vec![1.0, 0.0],
        _ => vec![0.0, 1.0],
    };
    let candidates = (0..n_tasks)
        .map(|i| Candidate {
            task: TaskId(i as u32),
            task_type: rng.gen_range(0..n_types),
            pickup: NodeId(1 + 2 * i as u32),
            delivery: NodeId(2 + 2 * i as u32),
        })
        .collect();
    let onboard: Vec<Onboard> = (0..n_onboard)
        .map(|i| Onboard {
            task: TaskId(100 + i as u32),
            delivery: NodeId((1 + 2 * n_tasks + i) as u32),
        })
        .collect();
    // onboard deliveries must be reachable from the start
    let onboard = onboard.into_iter().filter(|o| group[o.delivery.index()] == 0).collect::<Vec<_>>();
    let capacity = (onboard.len() as u32).max(1) + rng.gen_range(0..=3);
    RoutingInstance {
        robot: RobotId(0),
        start: NodeId(0),
        capability,
        capacity,
        candidates,
        onboard,
        cost: DistanceMatrix {
            locations,
            m,
            predecessors: None,
        },
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, NodeId, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| (o.1, o.2).cmp(&(self.1, self.2)))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest cost through the goals in order, never entering an avoid node
/// unless it is the goal currently sought. `None` if some goal is unreachable.
pub fn product_dijkstra(rm: &Roadmap, start: NodeId, goals: &[NodeId], avoid: &BTreeSet<NodeId>) -> Option<f64> {
    let levels = goals.len();
    let advance = |mut p: usize, n: NodeId| {
        while p < levels && goals[p] == n {
            p += 1;
        }
        p
    };
    let p0 = advance(0, start);
    let mut dist: HashMap<(NodeId, usize), f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert((start, p0), 0.0);
    heap.push(Entry(0.0, start, p0));
    while let Some(Entry(c, n, p)) = heap.pop() {
        if p == levels {
            return Some(c);
        }
        if dist.get(&(n, p)).is_some_and(|&best| c > best) {
            continue;
        }
        for &(m, w) in rm.neighbors(n) {
            if avoid.contains(&m) && goals.get(p) != Some(&m) {
                continue;
            }
            let q = advance(p, m);
            let nc = c + w;
            if dist.get(&(m, q)).map_or(true, |&old| nc < old) {
                dist.insert((m, q), nc);
                heap.push(Entry(nc, m, q));
            }
        }
    }
    None
}

/// Obstacle-free scenario with point pickups and deliveries.
/// Robots are `(start, capability, capacity)`, tasks `(pickup, delivery, type)`.
pub fn open_scenario(
    width: f64,
    height: f64,
    robots: &[(Point, Vec<f64>, u32)],
    tasks: &[(Point, Point, usize)],
) -> mrta_core::scenario::Scenario {
    use mrta_core::scenario::{Location, RobotSpec, Scenario, TaskSpec, WorkspaceSpec, SCHEMA_VERSION};
    let n_types = robots.iter().map(|r| r.1.len()).max().unwrap_or(1);
    Scenario {
        version: SCHEMA_VERSION,
        name: "open".into(),
        workspace: WorkspaceSpec {
            width,
            height,
            obstacles: Vec::new(),
        },
        sites: Default::default(),
        n_types,
        robots: robots
            .iter()
            .enumerate()
            .map(|(i, (start, capability, capacity))| RobotSpec {
                id: i as u32,
                class: Default::default(),
                start: *start,
                capability: capability.clone(),
                capacity: *capacity,
            })
            .collect(),
        tasks: tasks
            .iter()
            .enumerate()
            .map(|(i, &(p, d, t))| TaskSpec {
                id: i as u32,
                pickup: Location::Point(p),
                delivery: Location::Point(d),
                task_type: t,
                priority: 1.0,
            })
            .collect(),
        sampling: Default::default(),
        planner: Default::default(),
        allocator: Default::default(),
        instructions: Vec::new(),
    }
}

/// Step at which each task was delivered.
pub fn delivery_steps(trace: &[mrta_core::executor::Event]) -> std::collections::BTreeMap<TaskId, u64> {
    use mrta_core::executor::EventKind;
    trace
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Delivery { task, .. } => Some((*task, e.step)),
            _ => None,
        })
        .collect()
}
