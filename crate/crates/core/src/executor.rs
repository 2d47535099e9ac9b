//! Discrete-step execution of the assign-plan-act loop.
//!
//! Each step: apply queued instructions, sense nearby unknown obstacles, run
//! an allocation round if any robot is idle and something changed, then move
//! every robot one roadmap edge along its path. Pickups and deliveries happen
//! on arrival. The trace records everything except wall-clock times, so two
//! runs of the same scenario produce identical traces.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::allocator::{make_allocator, Allocator, AllocatorKind, RobotView, RoundInput};
use crate::auction::{Robot, RobotClass};
use crate::clustering::{Task, TaskState};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::halton::{accepted_points, sample_map};
use crate::ids::{NodeId, RobotId, TaskId};
use crate::path_planner::{build_spec, PlanOutcome, PlannerHandle, SequencingSpec};
use crate::roadmap::{Edge, NodeTag, Roadmap};
use crate::route_solver::{Onboard, RoutePlan, Stop, StopKind};
use crate::scenario::{Instruction, Scenario, ScheduledInstruction};
use crate::workspace::{Obstacle, ObstacleId, ObstacleKind, Workspace};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Running,
    Succeeded,
    Failed { reason: String, undelivered: Vec<TaskId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotInfo {
    pub id: RobotId,
    pub class: RobotClass,
    pub start: NodeId,
    pub capability: Vec<f64>,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub id: TaskId,
    #[serde(rename = "type")]
    pub task_type: usize,
    pub pickup: NodeId,
    pub delivery: NodeId,
    pub priority: f64,
}

/// Why a robot gave back tasks it had been assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseReason {
    PriorityChange,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Setup {
        allocator: AllocatorKind,
        n_types: usize,
        candidates: usize,
        accepted: usize,
        nodes: usize,
        edges: usize,
        robots: Vec<RobotInfo>,
        tasks: Vec<TaskInfo>,
        isolated_sites: Vec<NodeId>,
    },
    InstructionApplied {
        seq: u64,
        instruction: Instruction,
    },
    InstructionRejected {
        seq: u64,
        intent: String,
        reason: String,
    },
    TaskAdded {
        task: TaskInfo,
    },
    ObstacleAdded {
        id: u32,
        polygon: Vec<Point>,
        sensed: bool,
        removed_nodes: usize,
        removed_edges: usize,
    },
    PriorityChanged {
        task: TaskId,
        priority: f64,
    },
    TasksReleased {
        robot: RobotId,
        tasks: Vec<TaskId>,
        reason: ReleaseReason,
    },
    Round {
        robots: Vec<RobotId>,
        unassigned: Vec<TaskId>,
        clusters: Vec<Vec<TaskId>>,
        assignment: Vec<(RobotId, usize)>,
        warnings: Vec<String>,
    },
    RoutePlanned {
        robot: RobotId,
        tasks: Vec<TaskId>,
        stops: Vec<Stop>,
        cost: f64,
        exact: bool,
        order: Vec<usize>,
        excluded: Vec<(TaskId, String)>,
    },
    PathPlanned {
        robot: RobotId,
        goals: usize,
        avoid: usize,
        shared_sites: Vec<NodeId>,
        edges: usize,
        cost: Option<f64>,
        complete: bool,
        relaxed: bool,
    },
    Move {
        robot: RobotId,
        from: NodeId,
        to: NodeId,
    },
    Pickup {
        robot: RobotId,
        task: TaskId,
        node: NodeId,
        load: u32,
    },
    Delivery {
        robot: RobotId,
        task: TaskId,
        node: NodeId,
        load: u32,
    },
    Finished {
        status: Status,
        s_total: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub step: u64,
    pub robots: usize,
    pub tasks: usize,
    pub alloc_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub allocator: AllocatorKind,
    /// Seconds spent clustering, auctioning and routing.
    pub t_alloc: f64,
    /// Edge traversals summed over robots.
    pub s_total: u64,
    /// Seconds for setup plus all steps.
    pub t_total: f64,
    pub steps: u64,
    pub tasks_total: usize,
    pub tasks_delivered: usize,
    pub success: bool,
    pub per_robot_steps: Vec<u64>,
    pub replans: usize,
    pub expansions: usize,
    pub rounds: Vec<RoundMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
struct TaskRecord {
    task: Task,
    holder: Option<RobotId>,
}

struct RobotState {
    robot: Robot,
    onboard: Vec<TaskId>,
    plan: Option<RoutePlan>,
    next_stop: usize,
    planner: Option<PlannerHandle>,
    /// Remaining path, starting at the current node.
    path: VecDeque<NodeId>,
    steps: u64,
}

impl RobotState {
    fn remaining_goals(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.plan
            .iter()
            .flat_map(move |p| p.stops[self.next_stop.min(p.stops.len())..].iter().map(|s| s.node))
    }
}

/// Reply to a queued instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub intent: String,
    /// Id the task will get, for `add_task`.
    pub task: Option<TaskId>,
    /// First step boundary at which it will be applied.
    pub applies_at: u64,
}

struct Queued {
    seq: u64,
    instruction: Instruction,
    task: Option<TaskId>,
}

pub struct Simulation {
    n_types: usize,
    theta: f64,
    sensing_radius: f64,
    step_cap: u64,
    ws: Workspace,
    rm: Roadmap,
    sites: BTreeMap<String, Point>,
    robots: Vec<RobotState>,
    tasks: BTreeMap<TaskId, TaskRecord>,
    allocator: Box<dyn Allocator>,
    schedule: Vec<ScheduledInstruction>,
    schedule_pos: usize,
    queue: VecDeque<Queued>,
    next_task_id: u32,
    next_seq: u64,
    step: u64,
    status: Status,
    live: bool,
    dirty: bool,
    changed: bool,
    roadmap_revision: u64,
    events: Vec<Event>,
    metrics: Metrics,
    last_clusters: Vec<Vec<TaskId>>,
}

impl Simulation {
    /// Builds the roadmap and initial state. Uses the scenario's allocator.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_allocator(scenario, scenario.allocator)
    }

    pub fn with_allocator(scenario: &Scenario, kind: AllocatorKind) -> Result<Self> {
        let started = Instant::now();
        scenario.validate()?;
        let ws = scenario.build_workspace()?;
        let samples = sample_map(&ws, &scenario.sampling)?;
        let accepted = accepted_points(&samples);
        let mut rm = Roadmap::build(&accepted, &ws)?;

        let mut sites: Vec<(Point, NodeTag)> = scenario
            .sites
            .iter()
            .map(|(name, p)| (*p, NodeTag::Site(name.clone())))
            .collect();
        for r in &scenario.robots {
            sites.push((r.start, NodeTag::RobotStart(RobotId(r.id))));
        }
        for t in &scenario.tasks {
            sites.push((t.pickup.resolve(&scenario.sites)?, NodeTag::Pickup(TaskId(t.id))));
            sites.push((t.delivery.resolve(&scenario.sites)?, NodeTag::Delivery(TaskId(t.id))));
        }
        let report = rm.attach_sites(&ws, &sites)?;
        let n_named = scenario.sites.len();
        let robot_nodes = &report.nodes[n_named..n_named + scenario.robots.len()];
        let task_nodes = &report.nodes[n_named + scenario.robots.len()..];

        let mut robots: Vec<RobotState> = scenario
            .robots
            .iter()
            .zip(robot_nodes)
            .map(|(spec, &node)| {
                let mut robot = Robot::new(spec.id, node, spec.capability.clone(), spec.capacity);
                robot.class = spec.class;
                RobotState {
                    robot,
                    onboard: Vec::new(),
                    plan: None,
                    next_stop: 0,
                    planner: None,
                    path: VecDeque::new(),
                    steps: 0,
                }
            })
            .collect();
        robots.sort_by_key(|r| r.robot.id);

        let mut tasks = BTreeMap::new();
        for (i, spec) in scenario.tasks.iter().enumerate() {
            let mut task = Task::new(spec.id, task_nodes[2 * i], task_nodes[2 * i + 1], spec.task_type);
            task.priority = spec.priority;
            task.validate(scenario.n_types)?;
            tasks.insert(task.id, TaskRecord { task, holder: None });
        }
        let next_task_id = tasks.keys().last().map_or(0, |t: &TaskId| t.0 + 1);

        let mut schedule = scenario.instructions.clone();
        schedule.sort_by_key(|s| s.step);

        let mut sim = Self {
            n_types: scenario.n_types,
            theta: scenario.planner.theta,
            sensing_radius: scenario.planner.sensing_radius,
            step_cap: scenario.planner.step_cap,
            ws,
            rm,
            sites: scenario.sites.clone(),
            robots,
            tasks,
            allocator: make_allocator(kind, scenario.planner.seed),
            schedule,
            schedule_pos: 0,
            queue: VecDeque::new(),
            next_task_id,
            next_seq: 0,
            step: 0,
            status: Status::Running,
            live: false,
            dirty: true,
            changed: false,
            roadmap_revision: 0,
            events: Vec::new(),
            metrics: Metrics {
                allocator: kind,
                ..Default::default()
            },
            last_clusters: Vec::new(),
        };
        let setup = EventKind::Setup {
            allocator: kind,
            n_types: sim.n_types,
            candidates: samples.len(),
            accepted: accepted.len(),
            nodes: sim.rm.node_count(),
            edges: sim.rm.edge_count(),
            robots: sim
                .robots
                .iter()
                .map(|r| RobotInfo {
                    id: r.robot.id,
                    class: r.robot.class,
                    start: r.robot.position,
                    capability: r.robot.capability.clone(),
                    capacity: r.robot.capacity,
                })
                .collect(),
            tasks: sim.tasks.values().map(|t| task_info(&t.task)).collect(),
            isolated_sites: report.isolated.clone(),
        };
        sim.emit(setup);
        sim.metrics.t_total += started.elapsed().as_secs_f64();
        Ok(sim)
    }

    /// In live mode the run never ends on its own except at the step cap:
    /// an idle or stuck team just waits for instructions.
    pub fn set_live(&mut self, live: bool) {
        self.live = live;
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status != Status::Running
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn roadmap(&self) -> &Roadmap {
        &self.rm
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = self.metrics.clone();
        m.steps = self.step;
        m.tasks_total = self.tasks.len();
        m.tasks_delivered = self.delivered_count();
        m.success = self.status == Status::Succeeded;
        m.per_robot_steps = self.robots.iter().map(|r| r.steps).collect();
        m
    }

    pub fn task_state(&self, id: TaskId) -> Option<TaskState> {
        self.tasks.get(&id).map(|t| t.task.state)
    }

    fn delivered_count(&self) -> usize {
        self.tasks
            .values()
            .filter(|t| t.task.state == TaskState::Delivered)
            .count()
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event { step: self.step, kind });
    }

    /// Queues an instruction for the next step boundary.
    ///
    /// Schema-level problems are rejected here; problems that depend on the
    /// state at application time become rejection events in the trace.
    pub fn submit(&mut self, instruction: Instruction) -> Result<Ack> {
        if self.is_finished() {
            return Err(Error::Domain("the run has finished".into()));
        }
        instruction.validate(&self.ws, &self.sites, self.n_types)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        let task = match instruction {
            Instruction::AddTask { .. } => {
                let id = TaskId(self.next_task_id);
                self.next_task_id += 1;
                Some(id)
            }
            _ => None,
        };
        let ack = Ack {
            seq,
            intent: instruction.intent().to_string(),
            task,
            applies_at: self.step,
        };
        self.queue.push_back(Queued { seq, instruction, task });
        Ok(ack)
    }

    pub fn pending_instructions(&self) -> usize {
        self.queue.len() + self.schedule.len() - self.schedule_pos
    }

    /// Runs until success, failure or the step cap.
    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step_once()?;
        }
        Ok(())
    }

    /// Advances the simulation by one step.
    pub fn step_once(&mut self) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        if !self.live && self.pending_instructions() == 0 && self.delivered_count() == self.tasks.len() {
            self.status = Status::Succeeded;
            let s_total = self.metrics.s_total;
            self.emit(EventKind::Finished {
                status: Status::Succeeded,
                s_total,
            });
            return Ok(());
        }
        let started = Instant::now();
        self.changed = false;

        while self.schedule_pos < self.schedule.len() && self.schedule[self.schedule_pos].step <= self.step {
            let ins = self.schedule[self.schedule_pos].instruction.clone();
            self.schedule_pos += 1;
            if let Err(e) = self.submit(ins.clone()) {
                let seq = self.next_seq;
                self.next_seq += 1;
                self.emit(EventKind::InstructionRejected {
                    seq,
                    intent: ins.intent().into(),
                    reason: e.to_string(),
                });
            }
        }
        while let Some(q) = self.queue.pop_front() {
            self.apply(q)?;
        }

        self.sense();
        if self.dirty {
            self.round()?;
        }
        // Arrivals are stamped with the time they complete.
        self.step += 1;
        let mut moved = false;
        for i in 0..self.robots.len() {
            moved |= self.advance(i)?;
        }
        self.metrics.t_total += started.elapsed().as_secs_f64();
        self.check_termination(moved);
        Ok(())
    }

    fn check_termination(&mut self, moved: bool) {
        let undelivered: Vec<TaskId> = self
            .tasks
            .values()
            .filter(|t| t.task.state != TaskState::Delivered)
            .map(|t| t.task.id)
            .collect();
        let future = self.pending_instructions() > 0;
        let status = if undelivered.is_empty() && !future && !self.live {
            Status::Succeeded
        } else if self.step >= self.step_cap {
            Status::Failed {
                reason: format!("step cap {} reached", self.step_cap),
                undelivered,
            }
        } else if !moved && !self.changed && !future && !self.live {
            Status::Failed {
                reason: "deadlock: no robot can make progress".into(),
                undelivered,
            }
        } else {
            return;
        };
        info!("run finished at step {}: {:?}", self.step, status);
        self.status = status.clone();
        let s_total = self.metrics.s_total;
        self.emit(EventKind::Finished { status, s_total });
    }

    fn apply(&mut self, q: Queued) -> Result<()> {
        let outcome = match &q.instruction {
            Instruction::AddTask {
                pickup,
                delivery,
                task_type,
                priority,
            } => self.add_task(q.task.expect("add_task reserves an id"), pickup, delivery, *task_type, *priority),
            Instruction::ObstacleUpdate { polygon, kind } => self.add_obstacle(polygon.clone(), *kind),
            Instruction::ChangeTaskPriority { task, priority } => self.change_priority(TaskId(*task), *priority),
        };
        match outcome {
            Ok(effects) => {
                self.emit(EventKind::InstructionApplied {
                    seq: q.seq,
                    instruction: q.instruction,
                });
                for e in effects {
                    self.emit(e);
                }
                self.changed = true;
                Ok(())
            }
            Err(e @ (Error::Domain(_) | Error::Validation(_))) => {
                self.emit(EventKind::InstructionRejected {
                    seq: q.seq,
                    intent: q.instruction.intent().into(),
                    reason: e.to_string(),
                });
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn add_task(
        &mut self,
        id: TaskId,
        pickup: &crate::scenario::Location,
        delivery: &crate::scenario::Location,
        task_type: usize,
        priority: f64,
    ) -> Result<Vec<EventKind>> {
        let o = pickup.resolve(&self.sites)?;
        let d = delivery.resolve(&self.sites)?;
        if o == d {
            return Err(Error::Domain("pickup and delivery coincide".into()));
        }
        let report = self
            .rm
            .attach_sites(&self.ws, &[(o, NodeTag::Pickup(id)), (d, NodeTag::Delivery(id))])?;
        let mut task = Task::new(id.0, report.nodes[0], report.nodes[1], task_type);
        task.priority = priority;
        if task.pickup == task.delivery {
            return Err(Error::Domain("pickup and delivery map to the same roadmap node".into()));
        }
        let info = task_info(&task);
        self.tasks.insert(id, TaskRecord { task, holder: None });
        self.dirty = true;
        if !report.added_edges.is_empty() {
            self.roadmap_changed(&report.added_edges);
        }
        Ok(vec![EventKind::TaskAdded { task: info }])
    }

    fn add_obstacle(&mut self, polygon: Vec<Point>, kind: ObstacleKind) -> Result<Vec<EventKind>> {
        let id = self.ws.next_obstacle_id();
        let obstacle = Obstacle::new(id, polygon.clone(), kind, true);
        obstacle.validate()?;
        if let Some(r) = self
            .robots
            .iter()
            .find(|r| obstacle.contains(self.rm.position(r.robot.position)))
        {
            return Err(Error::Domain(format!("obstacle would enclose robot {}", r.robot.id)));
        }
        self.ws.add_known_obstacle(obstacle.clone())?;
        let report = self.rm.remove_region(&obstacle);
        let event = EventKind::ObstacleAdded {
            id,
            polygon,
            sensed: false,
            removed_nodes: report.removed_nodes.len(),
            removed_edges: report.removed_edges.len(),
        };
        self.roadmap_changed(&report.removed_edges);
        Ok(vec![event])
    }

    fn change_priority(&mut self, id: TaskId, priority: f64) -> Result<Vec<EventKind>> {
        let record = self
            .tasks
            .get_mut(&id)
            .ok_or_else(|| Error::Domain(format!("unknown task {id}")))?;
        if record.task.state == TaskState::Delivered {
            return Err(Error::Domain(format!("task {id} is already delivered")));
        }
        record.task.priority = priority;
        let mut events = vec![EventKind::PriorityChanged { task: id, priority }];
        if record.task.state == TaskState::Assigned {
            let holder = record.holder.expect("assigned tasks have a holder");
            let i = self.robot_index(holder);
            if let Some(e) = self.release(i, ReleaseReason::PriorityChange) {
                events.push(e);
            }
        }
        self.dirty = true;
        Ok(events)
    }

    fn robot_index(&self, id: RobotId) -> usize {
        self.robots.iter().position(|r| r.robot.id == id).expect("known robot")
    }

    /// Drops the robot's batch: unpicked tasks return to the pool, onboard items stay.
    fn release(&mut self, i: usize, reason: ReleaseReason) -> Option<EventKind> {
        let r = &mut self.robots[i];
        let plan = r.plan.take()?;
        r.planner = None;
        r.path.clear();
        r.next_stop = 0;
        let mut released = Vec::new();
        for t in &plan.selected {
            let rec = self.tasks.get_mut(t).expect("planned task exists");
            if rec.task.state == TaskState::Assigned {
                rec.task.state = TaskState::Unassigned;
                rec.holder = None;
                released.push(*t);
            }
        }
        self.dirty = true;
        Some(EventKind::TasksReleased {
            robot: r.robot.id,
            tasks: released,
            reason,
        })
    }

    fn sense(&mut self) {
        let found: Vec<ObstacleId> = self
            .ws
            .undiscovered()
            .filter(|o| {
                self.robots
                    .iter()
                    .any(|r| o.distance(self.rm.position(r.robot.position)) <= self.sensing_radius)
            })
            .map(|o| o.id)
            .collect();
        for id in found {
            self.discover(id);
        }
    }

    fn discover(&mut self, id: ObstacleId) {
        if !self.ws.discover(id) {
            return;
        }
        let obstacle = self
            .ws
            .all_obstacles()
            .find(|o| o.id == id)
            .expect("discovered obstacle exists")
            .clone();
        let report = self.rm.remove_region(&obstacle);
        debug!("sensed obstacle {} at step {}", id.0, self.step);
        self.emit(EventKind::ObstacleAdded {
            id: id.0,
            polygon: obstacle.polygon.clone(),
            sensed: true,
            removed_nodes: report.removed_nodes.len(),
            removed_edges: report.removed_edges.len(),
        });
        self.changed = true;
        self.roadmap_changed(&report.removed_edges);
    }

    /// Repairs every active path after roadmap edges changed.
    fn roadmap_changed(&mut self, edges: &[Edge]) {
        self.roadmap_revision += 1;
        self.dirty = true;
        for i in 0..self.robots.len() {
            let Some(handle) = self.robots[i].planner.as_mut() else { continue };
            let before = handle.stats().expansions;
            let outcome = handle.notify_changes(&self.rm, edges);
            let stats = handle.stats();
            self.metrics.replans += 1;
            self.metrics.expansions += stats.expansions - before;
            self.take_outcome(i, outcome);
        }
    }

    /// Installs a planner result, relaxing avoidance or giving up the batch if needed.
    fn take_outcome(&mut self, i: usize, outcome: PlanOutcome) {
        if outcome.complete {
            self.robots[i].path = outcome.path.into_iter().collect();
            return;
        }
        let has_avoid = self.robots[i].planner.as_ref().is_some_and(|h| !h.spec().avoid.is_empty());
        if has_avoid {
            let goals = self.robots[i].planner.as_ref().unwrap().spec().goals.clone();
            let progress = self.robots[i].planner.as_ref().unwrap().start().progress;
            let spec = SequencingSpec {
                goals: goals[progress..].to_vec(),
                avoid: BTreeSet::new(),
            };
            if let Ok((handle, relaxed)) = PlannerHandle::plan(spec, &self.rm, self.robots[i].robot.position) {
                self.metrics.expansions += handle.stats().expansions;
                let robot = self.robots[i].robot.id;
                let complete = relaxed.complete;
                self.emit(EventKind::PathPlanned {
                    robot,
                    goals: handle.spec().len(),
                    avoid: 0,
                    shared_sites: Vec::new(),
                    edges: relaxed.path.len().saturating_sub(1),
                    cost: complete.then_some(relaxed.cost),
                    complete,
                    relaxed: true,
                });
                if complete {
                    self.robots[i].planner = Some(handle);
                    self.robots[i].path = relaxed.path.into_iter().collect();
                    return;
                }
            }
        }
        if let Some(e) = self.release(i, ReleaseReason::Unreachable) {
            self.emit(e);
        }
    }

    fn round(&mut self) -> Result<()> {
        self.dirty = false;
        let idle: Vec<usize> = (0..self.robots.len()).filter(|&i| self.robots[i].plan.is_none()).collect();
        let unassigned: Vec<Task> = self
            .tasks
            .values()
            .filter(|t| t.task.state == TaskState::Unassigned)
            .map(|t| t.task.clone())
            .collect();
        if idle.is_empty() || (unassigned.is_empty() && idle.iter().all(|&i| self.robots[i].onboard.is_empty())) {
            return Ok(());
        }
        let views: Vec<RobotView> = idle
            .iter()
            .map(|&i| {
                let r = &self.robots[i];
                RobotView {
                    robot: r.robot.clone(),
                    onboard: r
                        .onboard
                        .iter()
                        .map(|t| Onboard {
                            task: *t,
                            delivery: self.tasks[t].task.delivery,
                        })
                        .collect(),
                }
            })
            .collect();
        let started = Instant::now();
        let out = self.allocator.allocate(&RoundInput {
            robots: &views,
            tasks: &unassigned,
            rm: &self.rm,
            n_types: self.n_types,
            theta: self.theta,
        })?;
        let seconds = started.elapsed().as_secs_f64();
        self.metrics.t_alloc += seconds;
        self.metrics.rounds.push(RoundMetrics {
            step: self.step,
            robots: idle.len(),
            tasks: unassigned.len(),
            alloc_seconds: seconds,
        });
        self.last_clusters = out.clusters.clone();
        self.emit(EventKind::Round {
            robots: views.iter().map(|v| v.robot.id).collect(),
            unassigned: unassigned.iter().map(|t| t.id).collect(),
            clusters: out.clusters,
            assignment: out.assignment,
            warnings: out.warnings,
        });

        for (&i, plan) in idle.iter().zip(out.plans) {
            if plan.is_empty() {
                continue;
            }
            let initial_load = self.robots[i].onboard.len() as u32;
            plan.verify(self.robots[i].robot.capacity, initial_load)
                .map_err(|e| Error::Domain(format!("allocator produced an infeasible route: {e}")))?;
            for t in &plan.selected {
                let rec = self.tasks.get_mut(t).expect("allocated task exists");
                if rec.task.state != TaskState::Unassigned {
                    return Err(Error::Domain(format!("task {t} allocated twice")));
                }
                rec.task.state = TaskState::Assigned;
                rec.holder = Some(plan.robot);
            }
            self.emit(EventKind::RoutePlanned {
                robot: plan.robot,
                tasks: plan.selected.clone(),
                stops: plan.stops.clone(),
                cost: plan.total_cost,
                exact: plan.exact,
                order: plan.order.clone(),
                excluded: plan.excluded.clone(),
            });
            self.changed = true;
            self.robots[i].plan = Some(plan);
            self.robots[i].next_stop = 0;
            self.start_path(i)?;
        }
        Ok(())
    }

    fn start_path(&mut self, i: usize) -> Result<()> {
        let others: BTreeSet<NodeId> = self
            .robots
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, r)| r.remaining_goals())
            .collect();
        let plan = self.robots[i].plan.as_ref().expect("planned robot");
        let (spec, conflicts) = build_spec(plan, &others);
        let avoid = spec.avoid.len();
        let (handle, outcome) = PlannerHandle::plan(spec, &self.rm, self.robots[i].robot.position)?;
        self.metrics.expansions += handle.stats().expansions;
        self.emit(EventKind::PathPlanned {
            robot: self.robots[i].robot.id,
            goals: handle.spec().len(),
            avoid,
            shared_sites: conflicts,
            edges: outcome.path.len().saturating_sub(1),
            cost: outcome.complete.then_some(outcome.cost),
            complete: outcome.complete,
            relaxed: false,
        });
        self.robots[i].planner = Some(handle);
        self.take_outcome(i, outcome);
        if self.robots[i].plan.is_some() {
            self.arrive(i);
        }
        Ok(())
    }

    /// Moves robot `i` one edge. Returns whether it moved.
    fn advance(&mut self, i: usize) -> Result<bool> {
        let r = &self.robots[i];
        if r.plan.is_none() || r.path.len() < 2 {
            return Ok(false);
        }
        let (u, v) = (r.path[0], r.path[1]);
        let (pu, pv) = (self.rm.position(u), self.rm.position(v));
        let blocking: Vec<ObstacleId> = self
            .ws
            .undiscovered()
            .filter(|o| o.blocks_segment(pu, pv))
            .map(|o| o.id)
            .collect();
        if !blocking.is_empty() {
            // The robot bumps into it: discovered, paths repaired, no move this step.
            for id in blocking {
                self.discover(id);
            }
            return Ok(false);
        }
        if self.rm.edge_weight(u, v).is_none() {
            return Err(Error::Domain(format!("robot {} path uses missing edge {u}-{v}", r.robot.id)));
        }
        let robot = r.robot.id;
        let r = &mut self.robots[i];
        r.path.pop_front();
        r.robot.position = v;
        r.steps += 1;
        if let Some(h) = r.planner.as_mut() {
            h.move_to(&self.rm, v);
        }
        self.metrics.s_total += 1;
        self.emit(EventKind::Move { robot, from: u, to: v });
        self.arrive(i);
        Ok(true)
    }

    /// Services every consecutive stop at the robot's current node.
    fn arrive(&mut self, i: usize) {
        let here = self.robots[i].robot.position;
        let robot = self.robots[i].robot.id;
        loop {
            let r = &self.robots[i];
            let Some(plan) = r.plan.as_ref() else { return };
            let Some(stop) = plan.stops.get(r.next_stop).copied() else { break };
            if stop.node != here {
                return;
            }
            let r = &mut self.robots[i];
            r.next_stop += 1;
            let rec = self.tasks.get_mut(&stop.task).expect("stop task exists");
            match stop.kind {
                StopKind::Pickup => {
                    rec.task.state = TaskState::Picked;
                    r.onboard.push(stop.task);
                    r.robot.load += 1;
                    let load = r.robot.load;
                    self.emit(EventKind::Pickup {
                        robot,
                        task: stop.task,
                        node: here,
                        load,
                    });
                }
                StopKind::Delivery => {
                    rec.task.state = TaskState::Delivered;
                    rec.holder = Some(robot);
                    r.onboard.retain(|t| *t != stop.task);
                    r.robot.load -= 1;
                    let load = r.robot.load;
                    self.emit(EventKind::Delivery {
                        robot,
                        task: stop.task,
                        node: here,
                        load,
                    });
                }
            }
            self.changed = true;
        }
        let r = &mut self.robots[i];
        r.plan = None;
        r.planner = None;
        r.path.clear();
        r.next_stop = 0;
        self.dirty = true;
    }

    pub fn snapshot(&self, include_roadmap: bool) -> Snapshot {
        let visible: BTreeSet<ObstacleId> = self.ws.visible_obstacles().map(|o| o.id).collect();
        Snapshot {
            version: SNAPSHOT_VERSION,
            step: self.step,
            status: self.status.clone(),
            width: self.ws.width,
            height: self.ws.height,
            robots: self
                .robots
                .iter()
                .map(|r| RobotSnapshot {
                    id: r.robot.id,
                    class: r.robot.class,
                    node: r.robot.position,
                    position: self.rm.position(r.robot.position),
                    capability: r.robot.capability.clone(),
                    capacity: r.robot.capacity,
                    load: r.robot.load,
                    onboard: r.onboard.clone(),
                    tasks: r.plan.as_ref().map(|p| p.selected.clone()).unwrap_or_default(),
                    stops: r
                        .plan
                        .as_ref()
                        .map(|p| p.stops[r.next_stop.min(p.stops.len())..].to_vec())
                        .unwrap_or_default(),
                    path: r.path.iter().map(|n| self.rm.position(*n)).collect(),
                    steps: r.steps,
                })
                .collect(),
            tasks: self
                .tasks
                .values()
                .map(|t| TaskSnapshot {
                    id: t.task.id,
                    task_type: t.task.task_type,
                    priority: t.task.priority,
                    state: t.task.state,
                    pickup: self.rm.position(t.task.pickup),
                    delivery: self.rm.position(t.task.delivery),
                    holder: t.holder,
                })
                .collect(),
            obstacles: self
                .ws
                .all_obstacles()
                .filter(|o| visible.contains(&o.id))
                .map(|o| ObstacleSnapshot {
                    id: o.id.0,
                    kind: o.kind,
                    polygon: o.polygon.clone(),
                    sensed: self.ws.discovered.contains(&o.id),
                })
                .collect(),
            sites: self.sites.clone(),
            clusters: self.last_clusters.clone(),
            s_total: self.metrics.s_total,
            pending_instructions: self.pending_instructions(),
            roadmap_revision: self.roadmap_revision,
            roadmap: include_roadmap.then(|| RoadmapSnapshot {
                nodes: self.rm.node_ids().map(|n| (n, self.rm.position(n))).collect(),
                edges: self.rm.edges().map(|(a, b, _)| (a, b)).collect(),
            }),
        }
    }
}

fn task_info(t: &Task) -> TaskInfo {
    TaskInfo {
        id: t.id,
        task_type: t.task_type,
        pickup: t.pickup,
        delivery: t.delivery,
        priority: t.priority,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub id: RobotId,
    pub class: RobotClass,
    pub node: NodeId,
    pub position: Point,
    pub capability: Vec<f64>,
    pub capacity: u32,
    pub load: u32,
    pub onboard: Vec<TaskId>,
    pub tasks: Vec<TaskId>,
    pub stops: Vec<Stop>,
    /// Remaining path, starting at the current position.
    pub path: Vec<Point>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSnapshot {
    pub id: TaskId,
    #[serde(rename = "type")]
    pub task_type: usize,
    pub priority: f64,
    pub state: TaskState,
    pub pickup: Point,
    pub delivery: Point,
    pub holder: Option<RobotId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSnapshot {
    pub id: u32,
    pub kind: ObstacleKind,
    pub polygon: Vec<Point>,
    pub sensed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadmapSnapshot {
    pub nodes: Vec<(NodeId, Point)>,
    pub edges: Vec<(NodeId, NodeId)>,
}

/// Everything an observer needs to draw the current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub step: u64,
    pub status: Status,
    pub width: f64,
    pub height: f64,
    pub robots: Vec<RobotSnapshot>,
    pub tasks: Vec<TaskSnapshot>,
    pub obstacles: Vec<ObstacleSnapshot>,
    pub sites: BTreeMap<String, Point>,
    pub clusters: Vec<Vec<TaskId>>,
    pub s_total: u64,
    pub pending_instructions: usize,
    /// Bumped whenever the roadmap changes; fetch the full roadmap when it moves.
    pub roadmap_revision: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub roadmap: Option<RoadmapSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: Vec<Event>,
    pub metrics: Metrics,
    pub status: Status,
}

/// Runs a scenario to completion with its configured allocator.
pub fn run(scenario: &Scenario) -> Result<SimOutcome> {
    run_with(scenario, scenario.allocator)
}

pub fn run_with(scenario: &Scenario, kind: AllocatorKind) -> Result<SimOutcome> {
    let mut sim = Simulation::with_allocator(scenario, kind)?;
    sim.run_to_end()?;
    Ok(SimOutcome {
        metrics: sim.metrics(),
        status: sim.status.clone(),
        trace: std::mem::take(&mut sim.events),
    })
}

/// Writes one JSON object per line.
pub fn write_trace<W: std::io::Write>(trace: &[Event], mut out: W) -> Result<()> {
    for e in trace {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: std::io::BufRead>(input: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Spread of times across complexity levels: (T_max - T_min) / (x_max - x_min).
pub fn sensitivity(times: &BTreeMap<u64, f64>) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Domain("sensitivity needs at least two complexity levels".into()));
    }
    let (lo, hi) = (*times.keys().next().unwrap(), *times.keys().last().unwrap());
    let tmax = times.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let tmin = times.values().copied().fold(f64::INFINITY, f64::min);
    if hi == lo {
        return Err(Error::Domain("complexity levels do not differ".into()));
    }
    Ok((tmax - tmin) / (hi - lo) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivity_examples() {
        let t = BTreeMap::from([(10, 1.0), (110, 2.0)]);
        assert!((sensitivity(&t).unwrap() - 0.01).abs() < 1e-15);
        let flat = BTreeMap::from([(10, 3.0), (20, 3.0), (40, 3.0)]);
        assert_eq!(sensitivity(&flat).unwrap(), 0.0);
        assert!(sensitivity(&BTreeMap::from([(10, 3.0)])).is_err());
    }
}
