//! Geometric ground truth: a bounded rectangle with polygonal obstacles.
//!
//! Obstacles are either known from the start or hidden until discovered by
//! sensing. Queries take a `visible_only` flag: `true` restricts them to what
//! the planner knows (known plus discovered), `false` uses ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObstacleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    #[default]
    Wall,
    Gate,
    Bush,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: ObstacleId,
    pub polygon: Vec<Point>,
    #[serde(default)]
    pub kind: ObstacleKind,
    #[serde(default = "default_true")]
    pub known_at_start: bool,
}

fn default_true() -> bool {
    true
}

impl Obstacle {
    pub fn new(id: u32, polygon: Vec<Point>, kind: ObstacleKind, known_at_start: bool) -> Self {
        Self {
            id: ObstacleId(id),
            polygon,
            kind,
            known_at_start,
        }
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(id: u32, min: Point, max: Point, kind: ObstacleKind, known_at_start: bool) -> Self {
        let polygon = vec![
            Point::new(min.x, min.y),
            Point::new(max.x, min.y),
            Point::new(max.x, max.y),
            Point::new(min.x, max.y),
        ];
        Self::new(id, polygon, kind, known_at_start)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polygon.len() < 3 {
            return Err(Error::Domain(format!(
                "obstacle {} has {} vertices, need at least 3",
                self.id.0,
                self.polygon.len()
            )));
        }
        if !self.polygon.iter().all(|p| p.is_finite()) {
            return Err(Error::Domain(format!("obstacle {} has non-finite vertex", self.id.0)));
        }
        if !geometry::is_simple_polygon(&self.polygon) {
            return Err(Error::Domain(format!("obstacle {} is not a simple polygon", self.id.0)));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        geometry::point_in_polygon(p, &self.polygon)
    }

    pub fn distance(&self, p: Point) -> f64 {
        geometry::polygon_distance(p, &self.polygon)
    }

    pub fn blocks_segment(&self, a: Point, b: Point) -> bool {
        geometry::segment_hits_polygon(a, b, &self.polygon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
    pub known_obstacles: Vec<Obstacle>,
    pub unknown_obstacles: Vec<Obstacle>,
    /// Unknown obstacles that have been sensed; grows monotonically.
    #[serde(default)]
    pub discovered: BTreeSet<ObstacleId>,
}

impl Workspace {
    /// Builds a workspace, splitting obstacles by `known_at_start`.
    pub fn new(width: f64, height: f64, obstacles: Vec<Obstacle>) -> Result<Self> {
        let (known_obstacles, unknown_obstacles) = obstacles.into_iter().partition(|o| o.known_at_start);
        let ws = Self {
            width,
            height,
            known_obstacles,
            unknown_obstacles,
            discovered: BTreeSet::new(),
        };
        ws.validate()?;
        Ok(ws)
    }

    pub fn empty(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            known_obstacles: Vec::new(),
            unknown_obstacles: Vec::new(),
            discovered: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.width > 0.0 && self.width.is_finite()) || !(self.height > 0.0 && self.height.is_finite()) {
            problems.push(format!("workspace size {}x{} must be positive", self.width, self.height));
        }
        let mut ids = BTreeSet::new();
        for o in self.all_obstacles() {
            if !ids.insert(o.id) {
                problems.push(format!("duplicate obstacle id {}", o.id.0));
            }
            if let Err(e) = o.validate() {
                problems.push(e.to_string());
            }
            if o.polygon.iter().any(|p| !self.in_bounds(*p)) {
                problems.push(format!("obstacle {} has a vertex outside the workspace", o.id.0));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn all_obstacles(&self) -> impl Iterator<Item = &Obstacle> {
        self.known_obstacles.iter().chain(self.unknown_obstacles.iter())
    }

    /// Obstacles the planner currently knows about.
    pub fn visible_obstacles(&self) -> impl Iterator<Item = &Obstacle> {
        self.known_obstacles.iter().chain(
            self.unknown_obstacles
                .iter()
                .filter(move |o| self.discovered.contains(&o.id)),
        )
    }

    fn considered(&self, visible_only: bool) -> Box<dyn Iterator<Item = &Obstacle> + '_> {
        if visible_only {
            Box::new(self.visible_obstacles())
        } else {
            Box::new(self.all_obstacles())
        }
    }

    pub fn undiscovered(&self) -> impl Iterator<Item = &Obstacle> {
        self.unknown_obstacles
            .iter()
            .filter(move |o| !self.discovered.contains(&o.id))
    }

    /// Marks an unknown obstacle as sensed. Returns `false` when it was already known.
    pub fn discover(&mut self, id: ObstacleId) -> bool {
        self.unknown_obstacles.iter().any(|o| o.id == id) && self.discovered.insert(id)
    }

    /// Adds an obstacle announced at run time; it is known immediately.
    pub fn add_known_obstacle(&mut self, mut obstacle: Obstacle) -> Result<ObstacleId> {
        obstacle.validate()?;
        if obstacle.polygon.iter().any(|p| !self.in_bounds(*p)) {
            return Err(Error::Domain("obstacle vertex outside the workspace".into()));
        }
        obstacle.known_at_start = true;
        let id = obstacle.id;
        if self.all_obstacles().any(|o| o.id == id) {
            return Err(Error::Domain(format!("obstacle id {} already in use", id.0)));
        }
        self.known_obstacles.push(obstacle);
        Ok(id)
    }

    pub fn next_obstacle_id(&self) -> u32 {
        self.all_obstacles().map(|o| o.id.0 + 1).max().unwrap_or(0)
    }

    fn boundary_distance(&self, p: Point) -> f64 {
        p.x.min(self.width - p.x).min(p.y).min(self.height - p.y)
    }

    /// Distance from `p` to the nearest considered obstacle or the world boundary.
    pub fn clearance(&self, p: Point, visible_only: bool) -> Result<f64> {
        if !self.in_bounds(p) {
            return Err(Error::Domain(format!(
                "point ({}, {}) outside {}x{} workspace",
                p.x, p.y, self.width, self.height
            )));
        }
        let mut best = self.boundary_distance(p);
        for o in self.considered(visible_only) {
            if best <= 0.0 {
                break;
            }
            best = best.min(o.distance(p));
        }
        Ok(best)
    }

    /// True iff segment ab touches the interior or boundary of any considered obstacle.
    pub fn segment_blocked(&self, a: Point, b: Point, visible_only: bool) -> bool {
        self.considered(visible_only).any(|o| o.blocks_segment(a, b))
    }

    pub fn inside_obstacle(&self, p: Point, visible_only: bool) -> bool {
        self.considered(visible_only).any(|o| o.contains(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square_world() -> Workspace {
        Workspace::new(
            10.0,
            10.0,
            vec![Obstacle::rect(
                0,
                Point::new(4.0, 4.0),
                Point::new(5.0, 5.0),
                ObstacleKind::Wall,
                true,
            )],
        )
        .unwrap()
    }

    #[test]
    fn clearance_examples() {
        let empty = Workspace::empty(10.0, 10.0);
        assert_eq!(empty.clearance(Point::new(5.0, 5.0), true).unwrap(), 5.0);
        let w = unit_square_world();
        assert_eq!(w.clearance(Point::new(4.5, 4.5), true).unwrap(), 0.0);
        assert!((w.clearance(Point::new(6.0, 4.5), true).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clearance_rejects_out_of_bounds() {
        let w = unit_square_world();
        assert!(matches!(w.clearance(Point::new(-0.1, 3.0), true), Err(Error::Domain(_))));
        assert!(matches!(w.clearance(Point::new(3.0, 10.5), false), Err(Error::Domain(_))));
    }

    #[test]
    fn segment_examples() {
        let empty = Workspace::empty(10.0, 10.0);
        assert!(!empty.segment_blocked(Point::new(0.0, 0.0), Point::new(10.0, 10.0), true));
        let w = unit_square_world();
        assert!(w.segment_blocked(Point::new(3.0, 4.5), Point::new(6.0, 4.5), true));
        assert!(!w.segment_blocked(Point::new(3.0, 6.0), Point::new(6.0, 6.0), true));
    }

    #[test]
    fn unknown_obstacles_hidden_until_discovered() {
        let mut w = Workspace::new(
            10.0,
            10.0,
            vec![Obstacle::rect(
                3,
                Point::new(4.0, 4.0),
                Point::new(5.0, 5.0),
                ObstacleKind::Gate,
                false,
            )],
        )
        .unwrap();
        let (a, b) = (Point::new(3.0, 4.5), Point::new(6.0, 4.5));
        assert!(!w.segment_blocked(a, b, true));
        assert!(w.segment_blocked(a, b, false));
        assert!(w.discover(ObstacleId(3)));
        assert!(!w.discover(ObstacleId(3)));
        assert!(w.segment_blocked(a, b, true));
    }

    #[test]
    fn validation_collects_problems() {
        let bad = Workspace::new(
            10.0,
            10.0,
            vec![
                Obstacle::new(1, vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)], ObstacleKind::Wall, true),
                Obstacle::rect(1, Point::new(8.0, 8.0), Point::new(11.0, 9.0), ObstacleKind::Wall, true),
            ],
        );
        match bad {
            Err(Error::Validation(items)) => assert_eq!(items.len(), 3),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    fn point_strategy() -> impl Strategy<Value = Point> {
        (0.0..10.0f64, 0.0..10.0f64).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn clearance_is_one_lipschitz(p in point_strategy(), q in point_strategy()) {
            let w = unit_square_world();
            let cp = w.clearance(p, true).unwrap();
            let cq = w.clearance(q, true).unwrap();
            prop_assert!((cp - cq).abs() <= p.dist(q) + 1e-9);
        }

        #[test]
        fn segment_blocked_is_symmetric(p in point_strategy(), q in point_strategy()) {
            let w = unit_square_world();
            prop_assert_eq!(w.segment_blocked(p, q, true), w.segment_blocked(q, p, true));
        }

        #[test]
        fn zero_clearance_points_block_some_short_segment(x in 4.0..5.0f64, y in 4.0..5.0f64) {
            let w = unit_square_world();
            let p = Point::new(x, y);
            prop_assert_eq!(w.clearance(p, true).unwrap(), 0.0);
            let eps = 1e-3;
            let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
            prop_assert!(dirs
                .iter()
                .any(|(dx, dy)| w.segment_blocked(p, Point::new(p.x + eps * dx, p.y + eps * dy), true)));
        }
    }
}
