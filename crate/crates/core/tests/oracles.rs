mod common;

use std::collections::BTreeSet;

use common::{brute_force_route, floyd_warshall, product_dijkstra, random_roadmap, random_routing_instance};
use mrta_core::geometry::Point;
use mrta_core::path_planner::{PlannerHandle, SequencingSpec};
use mrta_core::roadmap::{DistanceMatrix, Roadmap};
use mrta_core::route_solver::{select_and_route, Candidate, RoutingInstance, StopKind};
use mrta_core::workspace::{Obstacle, ObstacleKind, Workspace};
use mrta_core::{NodeId, RobotId, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn distance_matrix_matches_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..15 {
        let rm = random_roadmap(&mut rng, 120);
        let (ids, fw) = floyd_warshall(&rm);
        let dm = rm.distance_matrix(&ids).unwrap();
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                let (a, b) = (dm.get(i, j), fw[i][j]);
                assert!(a == b || (a - b).abs() <= 1e-9, "{i},{j}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn detour_around_wall_is_longer_than_straight_line() {
    // two columns of nodes split by a wall, joined only over the top
    let pts = [
        Point::new(1.0, 1.0),
        Point::new(1.0, 5.0),
        Point::new(1.0, 9.0),
        Point::new(3.0, 9.0),
        Point::new(3.0, 5.0),
        Point::new(3.0, 1.0),
    ];
    let ws = Workspace::new(
        4.0,
        10.0,
        vec![Obstacle::rect(0, Point::new(1.9, 0.0), Point::new(2.1, 8.0), ObstacleKind::Wall, true)],
    )
    .unwrap();
    let rm = Roadmap::from_points(&pts, &ws).unwrap();
    let m = rm.distance_matrix(&[NodeId(0), NodeId(5)]).unwrap();
    assert!((m.get(0, 1) - 18.0).abs() < 1e-9, "{}", m.get(0, 1));
    assert!(m.get(0, 1) > pts[0].dist(pts[5]));
    assert_eq!(m.get(0, 1), m.get(1, 0));
}

#[test]
fn route_solver_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..120 {
        let inst = random_routing_instance(&mut rng, 4);
        let plan = select_and_route(&inst).unwrap();
        let (count, cost) = brute_force_route(&inst);
        assert_eq!(plan.selected.len(), count, "case {case}");
        if count > 0 || !inst.onboard.is_empty() {
            assert!((plan.total_cost - cost).abs() <= 1e-9, "case {case}: {} vs {cost}", plan.total_cost);
        }
        plan.verify(inst.capacity, inst.onboard.len() as u32).unwrap();
    }
}

fn line_instance(costs: &[(u32, u32, f64)], n: usize, candidates: Vec<Candidate>, capacity: u32) -> RoutingInstance {
    let mut m = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in costs {
        m[a as usize][b as usize] = w;
        m[b as usize][a as usize] = w;
    }
    // close under shortest paths
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if m[i][k] + m[k][j] < m[i][j] {
                    m[i][j] = m[i][k] + m[k][j];
                }
            }
        }
    }
    RoutingInstance {
        robot: RobotId(0),
        start: NodeId(0),
        capability: vec![1.0],
        capacity,
        candidates,
        onboard: Vec::new(),
        cost: DistanceMatrix {
            locations: (0..n as u32).map(NodeId).collect(),
            m,
            predecessors: None,
        },
    }
}

fn task(id: u32, pickup: u32, delivery: u32) -> Candidate {
    Candidate {
        task: TaskId(id),
        task_type: 0,
        pickup: NodeId(pickup),
        delivery: NodeId(delivery),
    }
}

#[test]
fn single_task_route() {
    let inst = line_instance(&[(0, 1, 2.0), (1, 2, 3.0)], 3, vec![task(0, 1, 2)], 1);
    let plan = select_and_route(&inst).unwrap();
    let nodes: Vec<NodeId> = plan.stops.iter().map(|s| s.node).collect();
    assert_eq!(nodes, vec![NodeId(1), NodeId(2)]);
    assert_eq!(plan.total_cost, 5.0);
}

#[test]
fn shared_delivery_room_interleaves() {
    // o1 and o2 close together, shared far delivery room
    let inst = line_instance(
        &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 10.0)],
        4,
        vec![task(0, 1, 3), task(1, 2, 3)],
        2,
    );
    let plan = select_and_route(&inst).unwrap();
    let kinds: Vec<StopKind> = plan.stops.iter().map(|s| s.kind).collect();
    assert_eq!(kinds, vec![StopKind::Pickup, StopKind::Pickup, StopKind::Delivery, StopKind::Delivery]);
    assert_eq!(plan.total_cost, brute_force_route(&inst).1);
    assert_eq!(plan.total_cost, 12.0);
}

#[test]
fn five_candidates_capacity_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = common::random_points(&mut rng, 11, 10.0, 10.0);
    let m: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| a.dist(*b)).collect()).collect();
    let inst = RoutingInstance {
        robot: RobotId(0),
        start: NodeId(0),
        capability: vec![1.0],
        capacity: 3,
        candidates: (0..5).map(|i| task(i, 1 + 2 * i, 2 + 2 * i)).collect(),
        onboard: Vec::new(),
        cost: DistanceMatrix {
            locations: (0..11).map(NodeId).collect(),
            m,
            predecessors: None,
        },
    };
    let plan = select_and_route(&inst).unwrap();
    assert_eq!(plan.selected.len(), 3);
    // every 3-subset routed on its own costs at least as much
    for mask in 0u32..32 {
        if mask.count_ones() != 3 {
            continue;
        }
        let sub = RoutingInstance {
            candidates: inst.candidates.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c.clone()).collect(),
            ..inst.clone()
        };
        let (_, cost) = brute_force_route(&sub);
        assert!(plan.total_cost <= cost + 1e-9);
        let mut ids: Vec<TaskId> = sub.candidates.iter().map(|c| c.task).collect();
        ids.sort();
        let mut chosen = plan.selected.clone();
        chosen.sort();
        if ids == chosen {
            assert!((plan.total_cost - cost).abs() <= 1e-9);
        }
    }
}

#[test]
fn unit_costs_give_any_order() {
    let n = 7;
    let m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
    let inst = RoutingInstance {
        robot: RobotId(0),
        start: NodeId(0),
        capability: vec![1.0],
        capacity: 3,
        candidates: (0..3).map(|i| task(i, 1 + 2 * i, 2 + 2 * i)).collect(),
        onboard: Vec::new(),
        cost: DistanceMatrix {
            locations: (0..n as u32).map(NodeId).collect(),
            m,
            predecessors: None,
        },
    };
    assert_eq!(select_and_route(&inst).unwrap().total_cost, 6.0);
}

#[test]
fn line_graph_out_and_back() {
    let rm = Roadmap::with_edges(
        &[Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)],
        &[(0, 1), (1, 2)],
    );
    let spec = SequencingSpec {
        goals: vec![NodeId(2), NodeId(0)],
        avoid: BTreeSet::new(),
    };
    let (_, out) = PlannerHandle::plan(spec, &rm, NodeId(0)).unwrap();
    assert!(out.complete);
    assert_eq!(out.path, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(1), NodeId(0)]);
    assert_eq!(out.cost, 4.0);
}

#[test]
fn planner_matches_product_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..40 {
        let rm = random_roadmap(&mut rng, 150);
        let ids: Vec<NodeId> = rm.node_ids().collect();
        let start = ids[rng.gen_range(0..ids.len())];
        let goals: Vec<NodeId> = (0..rng.gen_range(0..=4)).map(|_| ids[rng.gen_range(0..ids.len())]).collect();
        let own: BTreeSet<NodeId> = goals.iter().copied().collect();
        let avoid: BTreeSet<NodeId> = (0..rng.gen_range(0..6))
            .map(|_| ids[rng.gen_range(0..ids.len())])
            .filter(|n| !own.contains(n) && *n != start)
            .collect();
        let oracle = product_dijkstra(&rm, start, &goals, &avoid);
        let spec = SequencingSpec {
            goals: goals.clone(),
            avoid: avoid.clone(),
        };
        let (_, out) = PlannerHandle::plan(spec, &rm, start).unwrap();
        assert_eq!(out.complete, oracle.is_some(), "case {case}");
        if let Some(c) = oracle {
            assert!((out.cost - c).abs() <= 1e-9, "case {case}: {} vs {c}", out.cost);
            // the path is walkable, respects avoidance and visits goals in order
            let walked: f64 = out.path.windows(2).map(|w| rm.edge_weight(w[0], w[1]).expect("edge on path")).sum();
            assert!((walked - out.cost).abs() <= 1e-9);
            let mut progress = 0;
            for &n in &out.path {
                if avoid.contains(&n) {
                    panic!("case {case}: path enters avoided node {n}");
                }
                while progress < goals.len() && goals[progress] == n {
                    progress += 1;
                }
            }
            assert_eq!(progress, goals.len());
        }
    }
}
