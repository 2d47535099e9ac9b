//! Obstacle-aware task assignment and planning for heterogeneous robot teams
//! doing pickup-and-delivery work.
//!
//! The pipeline: sample an adaptive Halton roadmap, compute shortest-path
//! distances between task sites, cluster tasks, auction clusters to robots,
//! route each robot's batch exactly, and execute with incremental
//! order-constrained path planning. The [`executor`] runs that loop as a
//! deterministic discrete-step simulation that accepts operator instructions.

pub mod allocator;
pub mod auction;
pub mod audit;
pub mod baselines;
pub mod bench;
pub mod clustering;
pub mod error;
pub mod executor;
pub mod generator;
pub mod geometry;
pub mod halton;
pub mod ids;
pub mod path_planner;
pub mod roadmap;
pub mod route_solver;
pub mod scenario;
pub mod translator;
pub mod workspace;

pub use error::{Error, Result};
pub use geometry::Point;
pub use ids::{NodeId, RobotId, TaskId};
