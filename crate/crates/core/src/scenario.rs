//! Scenario files: workspace, robots, tasks, configuration and scripted
//! instructions, stored as JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auction::RobotClass;
use crate::error::{Error, Result};
use crate::geometry::{is_simple_polygon, Point};
use crate::halton::HaltonConfig;
use crate::workspace::{Obstacle, ObstacleKind, Workspace};

pub const SCHEMA_VERSION: u32 = 1;

/// A point given either as coordinates or by the name of a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Point(Point),
    Named(String),
}

impl Location {
    pub fn resolve(&self, sites: &BTreeMap<String, Point>) -> Result<Point> {
        match self {
            Location::Point(p) => Ok(*p),
            Location::Named(name) => sites
                .get(name)
                .copied()
                .ok_or_else(|| Error::Domain(format!("unknown site '{name}'"))),
        }
    }
}

impl From<Point> for Location {
    fn from(p: Point) -> Self {
        Location::Point(p)
    }
}

impl From<&str> for Location {
    fn from(s: &str) -> Self {
        Location::Named(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: u32,
    #[serde(default)]
    pub class: RobotClass,
    pub start: Point,
    pub capability: Vec<f64>,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u32,
    pub pickup: Location,
    pub delivery: Location,
    #[serde(rename = "type")]
    pub task_type: usize,
    #[serde(default = "default_priority")]
    pub priority: f64,
}

fn default_priority() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    /// Roadmap clustering, weighted auction, exact routing.
    #[default]
    Oath,
    /// Consensus-based bundle algorithm.
    Cbba,
    /// k-means clusters, auction, nearest-neighbor routing.
    Kan,
    /// k-means clusters, auction, exact routing.
    Kam,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 4] = [AllocatorKind::Oath, AllocatorKind::Cbba, AllocatorKind::Kan, AllocatorKind::Kam];

    pub fn name(self) -> &'static str {
        match self {
            AllocatorKind::Oath => "oath",
            AllocatorKind::Cbba => "cbba",
            AllocatorKind::Kan => "kan",
            AllocatorKind::Kam => "kam",
        }
    }
}

impl std::str::FromStr for AllocatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AllocatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown allocator '{s}' (expected oath, cbba, kan or kam)")))
    }
}

impl std::fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Smoothing added to every type count in a cluster's composition.
    pub theta: f64,
    /// Robots discover unknown obstacles within this distance.
    pub sensing_radius: f64,
    /// The run stops as a failure after this many steps.
    pub step_cap: u64,
    /// Seed for allocator randomness (k-means seeding).
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            theta: 0.1,
            sensing_radius: 1.5,
            step_cap: 10_000,
            seed: 0,
        }
    }
}

/// Operator instruction in its structured form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case", deny_unknown_fields)]
pub enum Instruction {
    AddTask {
        pickup: Location,
        delivery: Location,
        #[serde(rename = "type")]
        task_type: usize,
        #[serde(default = "default_priority")]
        priority: f64,
    },
    ObstacleUpdate {
        polygon: Vec<Point>,
        #[serde(default)]
        kind: ObstacleKind,
    },
    ChangeTaskPriority {
        task: u32,
        priority: f64,
    },
}

impl Instruction {
    pub fn intent(&self) -> &'static str {
        match self {
            Instruction::AddTask { .. } => "add_task",
            Instruction::ObstacleUpdate { .. } => "obstacle_update",
            Instruction::ChangeTaskPriority { .. } => "change_task_priority",
        }
    }

    /// Checks that do not depend on the simulation state.
    pub fn validate(&self, ws: &Workspace, sites: &BTreeMap<String, Point>, n_types: usize) -> Result<()> {
        let mut problems = Vec::new();
        match self {
            Instruction::AddTask {
                pickup,
                delivery,
                task_type,
                priority,
            } => {
                for (what, loc) in [("pickup", pickup), ("delivery", delivery)] {
                    match loc.resolve(sites) {
                        Ok(p) if !ws.in_bounds(p) => problems.push(format!("{what} ({}, {}) is out of bounds", p.x, p.y)),
                        Ok(_) => {}
                        Err(e) => problems.push(format!("{what}: {e}")),
                    }
                }
                if *task_type >= n_types {
                    problems.push(format!("type {task_type} outside 0..{n_types}"));
                }
                if !(priority.is_finite() && *priority > 0.0) {
                    problems.push("priority must be positive".into());
                }
            }
            Instruction::ObstacleUpdate { polygon, .. } => {
                if polygon.len() < 3 {
                    problems.push("obstacle polygon needs at least 3 vertices".into());
                } else if !polygon.iter().all(|p| p.is_finite() && ws.in_bounds(*p)) {
                    problems.push("obstacle polygon leaves the workspace".into());
                } else if !is_simple_polygon(polygon) {
                    problems.push("obstacle polygon is not simple".into());
                }
            }
            Instruction::ChangeTaskPriority { priority, .. } => {
                if !(priority.is_finite() && *priority > 0.0) {
                    problems.push("priority must be positive".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// An instruction applied at the start of the given step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledInstruction {
    pub step: u64,
    pub instruction: Instruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub workspace: WorkspaceSpec,
    #[serde(default)]
    pub sites: BTreeMap<String, Point>,
    pub n_types: usize,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub sampling: HaltonConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub allocator: AllocatorKind,
    #[serde(default)]
    pub instructions: Vec<ScheduledInstruction>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Scenario {
    pub fn build_workspace(&self) -> Result<Workspace> {
        Workspace::new(self.workspace.width, self.workspace.height, self.workspace.obstacles.clone())
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.version != SCHEMA_VERSION {
            problems.push(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        let ws = match self.build_workspace() {
            Ok(ws) => Some(ws),
            Err(Error::Validation(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        if let Err(e) = self.sampling.validate() {
            problems.push(e.to_string());
        }
        let pc = &self.planner;
        if !(pc.theta.is_finite() && pc.theta > 0.0) {
            problems.push("planner.theta must be positive".into());
        }
        if !(pc.sensing_radius.is_finite() && pc.sensing_radius >= 0.0) {
            problems.push("planner.sensing_radius must be non-negative".into());
        }
        if pc.step_cap == 0 {
            problems.push("planner.step_cap must be positive".into());
        }
        if self.n_types == 0 {
            problems.push("n_types must be at least 1".into());
        }
        if self.robots.is_empty() {
            problems.push("at least one robot is required".into());
        }

        let free = |p: Point, what: &str, problems: &mut Vec<String>| {
            if let Some(ws) = &ws {
                if !p.is_finite() || !ws.in_bounds(p) {
                    problems.push(format!("{what} at ({}, {}) is out of bounds", p.x, p.y));
                } else if ws.inside_obstacle(p, false) {
                    problems.push(format!("{what} at ({}, {}) lies inside an obstacle", p.x, p.y));
                }
            }
        };
        for (name, p) in &self.sites {
            free(*p, &format!("site '{name}'"), &mut problems);
        }

        let mut robot_ids = BTreeSet::new();
        for r in &self.robots {
            if !robot_ids.insert(r.id) {
                problems.push(format!("duplicate robot id {}", r.id));
            }
            free(r.start, &format!("robot {} start", r.id), &mut problems);
            if r.capability.len() != self.n_types {
                problems.push(format!(
                    "robot {} has {} capability entries, expected {}",
                    r.id,
                    r.capability.len(),
                    self.n_types
                ));
            }
            if r.capability.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || r.capability.iter().sum::<f64>() <= 0.0 {
                problems.push(format!("robot {} capability must be non-negative with positive sum", r.id));
            }
            if r.capacity == 0 {
                problems.push(format!("robot {} capacity must be positive", r.id));
            }
        }

        let mut task_ids = BTreeSet::new();
        for t in &self.tasks {
            if !task_ids.insert(t.id) {
                problems.push(format!("duplicate task id {}", t.id));
            }
            let mut ends = Vec::new();
            for (what, loc) in [("pickup", &t.pickup), ("delivery", &t.delivery)] {
                match loc.resolve(&self.sites) {
                    Ok(p) => {
                        free(p, &format!("task {} {what}", t.id), &mut problems);
                        ends.push(p);
                    }
                    Err(e) => problems.push(format!("task {} {what}: {e}", t.id)),
                }
            }
            if ends.len() == 2 && ends[0] == ends[1] {
                problems.push(format!("task {} has identical pickup and delivery", t.id));
            }
            if t.task_type >= self.n_types {
                problems.push(format!("task {} type {} outside 0..{}", t.id, t.task_type, self.n_types));
            }
            if !(t.priority.is_finite() && t.priority > 0.0) {
                problems.push(format!("task {} priority must be positive", t.id));
            }
        }

        if let Some(ws) = &ws {
            for (i, s) in self.instructions.iter().enumerate() {
                if let Err(e) = s.instruction.validate(ws, &self.sites, self.n_types.max(1)) {
                    problems.push(format!("instruction {i} at step {}: {e}", s.step));
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text)
}
