mod common;

use std::collections::BTreeMap;

use common::{delivery_steps, open_scenario};
use mrta_core::audit::audit;
use mrta_core::bench::{run_benchmark, BenchmarkSuite};
use mrta_core::clustering::TaskState;
use mrta_core::error::Error;
use mrta_core::executor::{read_trace, run_with, write_trace, EventKind, Simulation, Snapshot, Status};
use mrta_core::generator::{maze_scenario, MazeParams};
use mrta_core::geometry::Point;
use mrta_core::scenario::{AllocatorKind, Instruction, Location, ScheduledInstruction};
use mrta_core::{RobotId, TaskId};

fn maze(n_tasks: usize, seed: u64) -> mrta_core::scenario::Scenario {
    maze_scenario(&MazeParams {
        n_tasks,
        seed,
        ..Default::default()
    })
}

fn two_robots() -> mrta_core::scenario::Scenario {
    open_scenario(
        12.0,
        12.0,
        &[
            (Point::new(1.0, 1.0), vec![1.0, 1.0], 2),
            (Point::new(11.0, 1.0), vec![1.0, 1.0], 2),
        ],
        &[
            (Point::new(2.0, 6.0), Point::new(2.0, 11.0), 0),
            (Point::new(10.0, 6.0), Point::new(10.0, 11.0), 1),
        ],
    )
}

#[test]
fn no_tasks_finishes_at_step_zero() {
    let s = open_scenario(5.0, 5.0, &[(Point::new(1.0, 1.0), vec![1.0], 1)], &[]);
    let out = run_with(&s, AllocatorKind::Oath).unwrap();
    assert_eq!(out.status, Status::Succeeded);
    assert_eq!(out.metrics.steps, 0);
    assert_eq!(out.metrics.s_total, 0);
    assert!(audit(&out.trace).is_clean());
}

#[test]
fn s_total_counts_every_move() {
    let out = run_with(&maze(12, 2), AllocatorKind::Oath).unwrap();
    assert!(out.metrics.success);
    let mut at: BTreeMap<RobotId, _> = BTreeMap::new();
    let mut moves = 0u64;
    for e in &out.trace {
        match &e.kind {
            EventKind::Setup { robots, .. } => {
                for r in robots {
                    at.insert(r.id, r.start);
                }
            }
            EventKind::Move { robot, from, to } => {
                assert_eq!(at[robot], *from, "robot {robot} jumped at step {}", e.step);
                at.insert(*robot, *to);
                moves += 1;
            }
            _ => {}
        }
    }
    assert_eq!(out.metrics.s_total, moves);
    assert_eq!(out.metrics.per_robot_steps.iter().sum::<u64>(), moves);
    assert_eq!(audit(&out.trace).moves, moves);
}

#[test]
fn same_scenario_same_trace() {
    let s = maze(12, 4);
    for kind in AllocatorKind::ALL {
        let a = run_with(&s, kind).unwrap();
        let b = run_with(&s, kind).unwrap();
        assert_eq!(a.trace, b.trace, "{kind}");
        assert_eq!(a.metrics.s_total, b.metrics.s_total);
    }
}

#[test]
fn every_allocator_passes_audit() {
    for seed in 0..2 {
        let s = maze(15, seed);
        for kind in AllocatorKind::ALL {
            let out = run_with(&s, kind).unwrap();
            assert!(out.metrics.success, "{kind} seed {seed}: {:?}", out.status);
            let report = audit(&out.trace);
            assert!(report.is_clean(), "{kind} seed {seed}: {:?}", report.violations);
            assert_eq!(report.deliveries, 15);
        }
    }
}

#[test]
fn trace_survives_jsonl_roundtrip() {
    let mut s = maze(8, 1);
    s.instructions.push(ScheduledInstruction {
        step: 3,
        instruction: Instruction::ObstacleUpdate {
            polygon: vec![Point::new(14.5, 10.5), Point::new(19.8, 10.5), Point::new(19.8, 10.9), Point::new(14.5, 10.9)],
            kind: Default::default(),
        },
    });
    let out = run_with(&s, AllocatorKind::Oath).unwrap();
    let mut buf = Vec::new();
    write_trace(&out.trace, &mut buf).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back, out.trace);
    assert_eq!(audit(&back), audit(&out.trace));
}

#[test]
fn added_task_is_delivered() {
    let mut sim = Simulation::new(&two_robots()).unwrap();
    for _ in 0..3 {
        sim.step_once().unwrap();
    }
    let ack = sim
        .submit(Instruction::AddTask {
            pickup: Location::Point(Point::new(6.0, 6.0)),
            delivery: Location::Point(Point::new(6.0, 1.0)),
            task_type: 1,
            priority: 1.0,
        })
        .unwrap();
    assert_eq!(ack.task, Some(TaskId(2)));
    assert_eq!(ack.applies_at, 3);
    assert_eq!(sim.pending_instructions(), 1);
    sim.run_to_end().unwrap();
    assert_eq!(sim.status(), &Status::Succeeded);
    assert_eq!(sim.task_state(TaskId(2)), Some(TaskState::Delivered));
    assert!(sim.events().iter().any(|e| e.step == 3 && matches!(e.kind, EventKind::TaskAdded { .. })));
    assert!(audit(sim.events()).is_clean());
}

#[test]
fn bad_instruction_has_no_side_effects() {
    let mut sim = Simulation::new(&two_robots()).unwrap();
    let before = sim.snapshot(false);
    let err = sim
        .submit(Instruction::AddTask {
            pickup: Location::Point(Point::new(40.0, 6.0)),
            delivery: Location::Named("nowhere".into()),
            task_type: 5,
            priority: 1.0,
        })
        .unwrap_err();
    match err {
        Error::Validation(problems) => assert_eq!(problems.len(), 3, "{problems:?}"),
        e => panic!("unexpected {e}"),
    }
    assert_eq!(sim.pending_instructions(), 0);
    assert_eq!(sim.snapshot(false), before);
    let ack = sim.submit(Instruction::ChangeTaskPriority { task: 0, priority: 2.0 }).unwrap();
    assert_eq!(ack.seq, 0);
}

#[test]
fn late_rejections_are_traced() {
    let mut sim = Simulation::new(&two_robots()).unwrap();
    // a box around robot 0's start and a task that does not exist
    sim.submit(Instruction::ObstacleUpdate {
        polygon: vec![Point::new(0.5, 0.5), Point::new(1.5, 0.5), Point::new(1.5, 1.5), Point::new(0.5, 1.5)],
        kind: Default::default(),
    })
    .unwrap();
    sim.submit(Instruction::ChangeTaskPriority { task: 99, priority: 3.0 }).unwrap();
    sim.step_once().unwrap();
    let rejected: Vec<u64> = sim
        .events()
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::InstructionRejected { seq, .. } => Some(*seq),
            _ => None,
        })
        .collect();
    assert_eq!(rejected, vec![0, 1]);
    sim.run_to_end().unwrap();
    assert_eq!(sim.status(), &Status::Succeeded);
}

#[test]
fn finished_run_refuses_instructions() {
    let mut sim = Simulation::new(&two_robots()).unwrap();
    sim.run_to_end().unwrap();
    let err = sim.submit(Instruction::ChangeTaskPriority { task: 0, priority: 2.0 }).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    let steps = sim.current_step();
    sim.step_once().unwrap();
    assert_eq!(sim.current_step(), steps);
}

#[test]
fn snapshot_roundtrips_through_json() {
    let mut sim = Simulation::new(&maze(6, 3)).unwrap();
    for _ in 0..5 {
        sim.step_once().unwrap();
    }
    for with_roadmap in [false, true] {
        let snap = sim.snapshot(with_roadmap);
        let text = serde_json::to_string(&snap).unwrap();
        let back: Snapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(back, snap);
        assert_eq!(snap.roadmap.is_some(), with_roadmap);
        assert_eq!(snap.step, 5);
        assert_eq!(snap.tasks.len(), 6);
    }
}

#[test]
fn scheduled_and_submitted_instructions_agree() {
    let extra = Instruction::AddTask {
        pickup: Location::Point(Point::new(6.0, 6.0)),
        delivery: Location::Point(Point::new(6.0, 1.0)),
        task_type: 0,
        priority: 4.0,
    };
    let mut scripted = two_robots();
    scripted.instructions.push(ScheduledInstruction {
        step: 4,
        instruction: extra.clone(),
    });
    let a = run_with(&scripted, AllocatorKind::Oath).unwrap();

    let mut sim = Simulation::new(&two_robots()).unwrap();
    sim.set_live(false);
    for _ in 0..4 {
        sim.step_once().unwrap();
    }
    sim.submit(extra).unwrap();
    sim.run_to_end().unwrap();
    assert_eq!(sim.events(), a.trace.as_slice());
    assert!(delivery_steps(&a.trace).contains_key(&TaskId(2)));
}

#[test]
fn bench_rerun_differs_only_in_timing() {
    let suite = BenchmarkSuite {
        allocators: vec![AllocatorKind::Oath, AllocatorKind::Kan],
        tasks: vec![6, 9],
        robots: vec![3],
        capacity: vec![2],
        seeds: vec![0, 1],
        ..Default::default()
    };
    let a = run_benchmark(&suite).unwrap();
    let b = run_benchmark(&suite).unwrap();
    assert_eq!(a.rows.len(), 8);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(
            (x.allocator, x.p, x.r, x.q, x.seed, x.s_total, x.success),
            (y.allocator, y.p, y.r, y.q, y.seed, y.s_total, y.success)
        );
    }
    assert!(a.rows.iter().all(|r| r.success));
}
