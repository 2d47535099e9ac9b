//! Seeded maze scenarios for benchmarks and tests.
//!
//! A 20 x 20 floor split by walls into four rooms with narrow openings,
//! delivery rooms in the corners, and a few gates and bushes that robots only
//! find out about when they get close.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::RobotClass;
use crate::geometry::Point;
use crate::halton::HaltonConfig;
use crate::scenario::{AllocatorKind, Location, PlannerConfig, RobotSpec, Scenario, TaskSpec, WorkspaceSpec, SCHEMA_VERSION};
use crate::workspace::{Obstacle, ObstacleKind, Workspace};

pub const MAZE_SIZE: f64 = 20.0;
/// Task sites keep at least this much distance from every obstacle.
pub const SITE_CLEARANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeParams {
    pub n_tasks: usize,
    pub n_robots: usize,
    pub capacity: u32,
    pub n_types: usize,
    pub seed: u64,
    /// Include gates and bushes that start hidden.
    pub hidden_obstacles: bool,
    pub allocator: AllocatorKind,
}

impl Default for MazeParams {
    fn default() -> Self {
        Self {
            n_tasks: 25,
            n_robots: 4,
            capacity: 3,
            n_types: 2,
            seed: 0,
            hidden_obstacles: true,
            allocator: AllocatorKind::Oath,
        }
    }
}

fn wall(id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Obstacle {
    Obstacle::rect(id, Point::new(x0, y0), Point::new(x1, y1), ObstacleKind::Wall, true)
}

fn bush(id: u32, c: Point, r: f64) -> Obstacle {
    let polygon = (0..8)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_4 * k as f64;
            Point::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    Obstacle::new(id, polygon, ObstacleKind::Bush, false)
}

pub fn maze_obstacles(hidden: bool) -> Vec<Obstacle> {
    let mut obs = vec![
        // long horizontal wall, open on the right
        wall(0, 0.0, 9.8, 14.0, 10.2),
        // lower vertical wall, open towards the middle
        wall(1, 9.8, 0.0, 10.2, 6.5),
        // upper-left vertical wall, open towards the middle
        wall(2, 5.8, 13.0, 6.2, 20.0),
        // upper-right partition
        wall(3, 13.8, 13.5, 14.2, 20.0),
        // short stub in the lower right room
        wall(4, 14.0, 4.0, 20.0, 4.4),
    ];
    if hidden {
        obs.push(Obstacle::rect(
            5,
            Point::new(16.5, 12.0),
            Point::new(17.5, 12.4),
            ObstacleKind::Gate,
            false,
        ));
        obs.push(bush(6, Point::new(4.0, 5.0), 0.6));
        obs.push(bush(7, Point::new(10.0, 15.5), 0.6));
    }
    obs
}

pub fn maze_sites() -> BTreeMap<String, Point> {
    BTreeMap::from([
        ("B".to_string(), Point::new(1.5, 18.5)),
        ("C".to_string(), Point::new(18.5, 18.5)),
        ("D".to_string(), Point::new(18.5, 1.5)),
        ("E".to_string(), Point::new(1.5, 1.5)),
    ])
}

/// Builds a scenario; task sites and types are drawn from `seed`.
pub fn maze_scenario(p: &MazeParams) -> Scenario {
    let obstacles = maze_obstacles(p.hidden_obstacles);
    let ws = Workspace::new(MAZE_SIZE, MAZE_SIZE, obstacles.clone()).expect("maze layout is valid");
    let sites = maze_sites();
    let names: Vec<&String> = sites.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let starts = [
        Point::new(16.0, 8.0),
        Point::new(17.5, 8.0),
        Point::new(16.0, 6.5),
        Point::new(17.5, 6.5),
        Point::new(16.0, 9.0),
        Point::new(17.5, 9.0),
        Point::new(18.5, 6.5),
        Point::new(18.5, 8.0),
    ];
    let robots = (0..p.n_robots)
        .map(|i| {
            let start = if i < starts.len() {
                starts[i]
            } else {
                Point::new(15.0 + 0.5 * (i % 8) as f64, 5.0 + 0.5 * (i / 8) as f64)
            };
            // Alternate specialists and generalists.
            let capability = if p.n_types == 1 {
                vec![1.0]
            } else {
                match i % 4 {
                    0 | 3 => vec![1.0; p.n_types],
                    1 => (0..p.n_types).map(|t| if t == 0 { 1.0 } else { 0.0 }).collect(),
                    _ => (0..p.n_types).map(|t| if t == 0 { 0.0 } else { 1.0 }).collect(),
                }
            };
            RobotSpec {
                id: i as u32,
                class: if i % 2 == 0 { RobotClass::Ground } else { RobotClass::Drone },
                start,
                capability,
                capacity: p.capacity,
            }
        })
        .collect();

    let mut tasks = Vec::with_capacity(p.n_tasks);
    while tasks.len() < p.n_tasks {
        let q = Point::new(rng.gen_range(0.5..MAZE_SIZE - 0.5), rng.gen_range(0.5..MAZE_SIZE - 0.5));
        if ws.clearance(q, false).map_or(true, |c| c < SITE_CLEARANCE) {
            continue;
        }
        if sites.values().any(|s| s.dist(q) < 1.0) {
            continue;
        }
        let delivery = names[rng.gen_range(0..names.len())].clone();
        tasks.push(TaskSpec {
            id: tasks.len() as u32,
            pickup: Location::Point(q),
            delivery: Location::Named(delivery),
            task_type: rng.gen_range(0..p.n_types),
            priority: 1.0,
        });
    }

    Scenario {
        version: SCHEMA_VERSION,
        name: format!("maze-p{}-r{}-q{}-s{}", p.n_tasks, p.n_robots, p.capacity, p.seed),
        workspace: WorkspaceSpec {
            width: MAZE_SIZE,
            height: MAZE_SIZE,
            obstacles,
        },
        sites,
        n_types: p.n_types,
        robots,
        tasks,
        sampling: HaltonConfig {
            seed: p.seed,
            ..HaltonConfig::default()
        },
        planner: PlannerConfig {
            seed: p.seed,
            ..PlannerConfig::default()
        },
        allocator: p.allocator,
        instructions: Vec::new(),
    }
}
