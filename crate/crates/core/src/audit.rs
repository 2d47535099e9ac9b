//! Replays a trace and checks it against the task-allocation constraints.
//!
//! Independent of the executor's own bookkeeping: positions, loads and task
//! ownership are rebuilt from the events alone.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::executor::{Event, EventKind, Status, TaskInfo};
use crate::ids::{NodeId, RobotId, TaskId};

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AuditReport {
    pub violations: Vec<String>,
    /// Edge traversals counted from move events.
    pub moves: u64,
    pub pickups: usize,
    pub deliveries: usize,
    pub success: bool,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

struct RobotReplay {
    position: NodeId,
    capacity: u32,
    capability: Vec<f64>,
    load: u32,
}

#[derive(Default)]
struct TaskReplay {
    info: Option<TaskInfo>,
    holder: Option<RobotId>,
    picked: Option<(RobotId, u64)>,
    delivered: Option<(RobotId, u64)>,
}

pub fn audit(trace: &[Event]) -> AuditReport {
    let mut report = AuditReport::default();
    let mut robots: BTreeMap<RobotId, RobotReplay> = BTreeMap::new();
    let mut tasks: BTreeMap<TaskId, TaskReplay> = BTreeMap::new();
    let mut finished = None;
    let mut violations: Vec<String> = Vec::new();

    for e in trace {
        let step = e.step;
        match &e.kind {
            EventKind::Setup {
                robots: rs, tasks: ts, ..
            } => {
                for r in rs {
                    robots.insert(
                        r.id,
                        RobotReplay {
                            position: r.start,
                            capacity: r.capacity,
                            capability: r.capability.clone(),
                            load: 0,
                        },
                    );
                }
                for t in ts {
                    tasks.entry(t.id).or_default().info = Some(t.clone());
                }
            }
            EventKind::TaskAdded { task } => {
                let entry = tasks.entry(task.id).or_default();
                if entry.info.is_some() {
                    violations.push(format!("task {} added twice", task.id));
                }
                entry.info = Some(task.clone());
            }
            EventKind::RoutePlanned { robot, tasks: ids, .. } => {
                for id in ids {
                    let Some(t) = tasks.get_mut(id) else {
                        violations.push(format!("step {step}: robot {robot} planned unknown task {id}"));
                        continue;
                    };
                    if let Some(other) = t.holder {
                        violations.push(format!("step {step}: task {id} assigned to {robot} while held by {other}"));
                    }
                    if t.picked.is_some() {
                        violations.push(format!("step {step}: task {id} reassigned after pickup"));
                    }
                    t.holder = Some(*robot);
                }
            }
            EventKind::TasksReleased { robot, tasks: ids, .. } => {
                for id in ids {
                    if let Some(t) = tasks.get_mut(id) {
                        if t.holder != Some(*robot) {
                            violations.push(format!("step {step}: robot {robot} released task {id} it did not hold"));
                        }
                        t.holder = None;
                    }
                }
            }
            EventKind::Move { robot, from, to } => {
                report.moves += 1;
                let Some(r) = robots.get_mut(robot) else {
                    violations.push(format!("step {step}: unknown robot {robot} moved"));
                    continue;
                };
                if r.position != *from {
                    violations.push(format!("step {step}: robot {robot} moved from {from} but was at {}", r.position));
                }
                if from == to {
                    violations.push(format!("step {step}: robot {robot} moved in place"));
                }
                r.position = *to;
            }
            EventKind::Pickup { robot, task, node, load } => {
                report.pickups += 1;
                let (Some(r), Some(t)) = (robots.get_mut(robot), tasks.get_mut(task)) else {
                    violations.push(format!("step {step}: pickup with unknown robot {robot} or task {task}"));
                    continue;
                };
                let info = t.info.as_ref().expect("task info");
                if t.picked.is_some() {
                    violations.push(format!("step {step}: task {task} picked twice"));
                }
                if t.holder != Some(*robot) {
                    violations.push(format!("step {step}: robot {robot} picked task {task} without holding it"));
                }
                if !r.capability.get(info.task_type).is_some_and(|&c| c > 0.0) {
                    violations.push(format!("step {step}: robot {robot} picked type {} it cannot handle", info.task_type));
                }
                if r.position != info.pickup || *node != info.pickup {
                    violations.push(format!("step {step}: task {task} picked away from its pickup site"));
                }
                r.load += 1;
                if r.load > r.capacity {
                    violations.push(format!("step {step}: robot {robot} load {} exceeds capacity {}", r.load, r.capacity));
                }
                if r.load != *load {
                    violations.push(format!("step {step}: robot {robot} reported load {load}, replay says {}", r.load));
                }
                t.picked = Some((*robot, step));
            }
            EventKind::Delivery { robot, task, node, load } => {
                report.deliveries += 1;
                let (Some(r), Some(t)) = (robots.get_mut(robot), tasks.get_mut(task)) else {
                    violations.push(format!("step {step}: delivery with unknown robot {robot} or task {task}"));
                    continue;
                };
                let info = t.info.as_ref().expect("task info");
                if t.delivered.is_some() {
                    violations.push(format!("step {step}: task {task} delivered twice"));
                }
                match t.picked {
                    None => violations.push(format!("step {step}: task {task} delivered before pickup")),
                    Some((by, _)) if by != *robot => {
                        violations.push(format!("step {step}: task {task} picked by {by} but delivered by {robot}"))
                    }
                    Some((_, at)) if at >= step => violations.push(format!("step {step}: task {task} delivered in its pickup step")),
                    _ => {}
                }
                if r.position != info.delivery || *node != info.delivery {
                    violations.push(format!("step {step}: task {task} delivered away from its delivery site"));
                }
                if r.load == 0 {
                    violations.push(format!("step {step}: robot {robot} delivered with empty load"));
                } else {
                    r.load -= 1;
                }
                if r.load != *load {
                    violations.push(format!("step {step}: robot {robot} reported load {load}, replay says {}", r.load));
                }
                t.holder = None;
                t.delivered = Some((*robot, step));
            }
            EventKind::Finished { status, s_total } => {
                finished = Some((status.clone(), *s_total));
            }
            _ => {}
        }
    }

    match finished {
        None => violations.push("trace has no finish record".into()),
        Some((status, s_total)) => {
            if s_total != report.moves {
                violations.push(format!("reported S_total {s_total} but trace has {} moves", report.moves));
            }
            if status == Status::Succeeded {
                report.success = true;
                for (id, t) in &tasks {
                    if t.delivered.is_none() {
                        violations.push(format!("run succeeded but task {id} was never delivered"));
                    }
                }
                for (id, r) in &robots {
                    if r.load != 0 {
                        violations.push(format!("run succeeded but robot {id} still carries {}", r.load));
                    }
                }
            }
        }
    }
    report.violations = violations;
    report
}
