//! Cluster-weighted auction.
//!
//! Each robot scores every cluster by obstacle-aware travel distance divided
//! by how well its capabilities match the cluster's type composition. Robots
//! then bid sequentially; a lower bid displaces the current holder, who
//! re-enters on the next pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::error::{Error, Result};
use crate::ids::{NodeId, RobotId};
use crate::roadmap::Roadmap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RobotClass {
    #[default]
    Ground,
    Drone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: RobotId,
    pub position: NodeId,
    /// Per-type capability weights; zero means the type cannot be handled.
    pub capability: Vec<f64>,
    pub capacity: u32,
    pub class: RobotClass,
    /// Remaining planned stops.
    #[serde(default)]
    pub route: Vec<NodeId>,
    #[serde(default)]
    pub load: u32,
}

impl Robot {
    pub fn new(id: u32, position: NodeId, capability: Vec<f64>, capacity: u32) -> Self {
        Self {
            id: RobotId(id),
            position,
            capability,
            capacity,
            class: RobotClass::Ground,
            route: Vec::new(),
            load: 0,
        }
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        if self.capability.len() != n_types {
            return Err(Error::Domain(format!(
                "robot {} has {} capability entries, expected {n_types}",
                self.id,
                self.capability.len()
            )));
        }
        if self.capability.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || self.capability.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Domain(format!(
                "robot {} capability must be non-negative with positive sum",
                self.id
            )));
        }
        if self.capacity == 0 {
            return Err(Error::Domain(format!("robot {} capacity must be positive", self.id)));
        }
        if self.load > self.capacity {
            return Err(Error::Domain(format!("robot {} load exceeds capacity", self.id)));
        }
        Ok(())
    }

    pub fn can_handle(&self, task_type: usize) -> bool {
        self.capability.get(task_type).is_some_and(|&c| c > 0.0)
    }

    /// Capability normalised to unit L1 norm.
    pub fn zeta(&self) -> Vec<f64> {
        let total: f64 = self.capability.iter().sum();
        self.capability.iter().map(|c| c / total).collect()
    }
}

/// Inner product of a cluster composition and a normalised capability.
pub fn specialization(psi: &[f64], zeta: &[f64]) -> f64 {
    psi.iter().zip(zeta).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub robots: Vec<RobotId>,
    pub clusters: Vec<usize>,
    /// `s[r][k]`; +inf when the cluster is unreachable or incompatible.
    pub s: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub dist: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    /// Combines distances and match factors into scores.
    ///
    /// A robot that cannot handle any type present in a cluster scores +inf
    /// there, whatever the smoothed match factor says. Scores are divided by
    /// the cluster's priority weight.
    pub fn assemble(robots: &[Robot], clusters: &[Cluster], dist: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>) -> Self {
        let s = robots
            .iter()
            .enumerate()
            .map(|(r, robot)| {
                clusters
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let compatible = c
                            .type_counts
                            .iter()
                            .enumerate()
                            .any(|(ty, &n)| n > 0.0 && robot.can_handle(ty));
                        let (d, g) = (dist[r][k], gamma[r][k]);
                        if !compatible || !d.is_finite() || !(g > 0.0) {
                            f64::INFINITY
                        } else {
                            (d / g) / c.weight
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            robots: robots.iter().map(|r| r.id).collect(),
            clusters: clusters.iter().map(|c| c.id).collect(),
            s,
            gamma,
            dist,
        }
    }

    pub fn from_scores(s: Vec<Vec<f64>>) -> Self {
        let rows = s.len();
        let cols = s.first().map_or(0, Vec::len);
        Self {
            robots: (0..rows as u32).map(RobotId).collect(),
            clusters: (0..cols).collect(),
            gamma: vec![vec![1.0; cols]; rows],
            dist: s.clone(),
            s,
        }
    }
}

/// Obstacle-aware scores: roadmap distance from each robot to the node nearest
/// each cluster center, over the specialization factor.
pub fn score(robots: &[Robot], clusters: &[Cluster], rm: &Roadmap) -> Result<ScoreMatrix> {
    let centers: Vec<Option<NodeId>> = clusters.iter().map(|c| rm.nearest_node(c.center, true)).collect();
    let mut dist = Vec::with_capacity(robots.len());
    let mut gamma = Vec::with_capacity(robots.len());
    for robot in robots {
        let sp = rm.dijkstra_from(robot.position)?;
        dist.push(
            centers
                .iter()
                .map(|c| c.map_or(f64::INFINITY, |n| sp.distance(n)))
                .collect(),
        );
        let zeta = robot.zeta();
        gamma.push(clusters.iter().map(|c| specialization(&c.psi, &zeta)).collect());
    }
    Ok(ScoreMatrix::assemble(robots, clusters, dist, gamma))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Robot index in the score matrix -> cluster index.
    pub assignment: BTreeMap<usize, usize>,
    pub unmatched: Vec<usize>,
    pub iterations: usize,
}

/// Sequential auction with displacement.
///
/// Robots go in index order. Each unassigned robot takes the cluster with its
/// lowest score among those where it beats the standing best bid; a displaced
/// holder bids again on the next pass. Stops after a pass with no change.
pub fn auction(s: &ScoreMatrix) -> ClusterAssignment {
    let n_robots = s.s.len();
    let n_clusters = s.clusters.len();
    let mut best_bid = vec![f64::INFINITY; n_clusters];
    let mut holder: Vec<Option<usize>> = vec![None; n_clusters];
    let mut held: Vec<Option<usize>> = vec![None; n_robots];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for r in 0..n_robots {
            if held[r].is_some() {
                continue;
            }
            let choice = (0..n_clusters)
                .filter(|&k| s.s[r][k] < best_bid[k])
                .min_by(|&a, &b| s.s[r][a].total_cmp(&s.s[r][b]).then(a.cmp(&b)));
            if let Some(k) = choice {
                if let Some(prev) = holder[k] {
                    held[prev] = None;
                }
                best_bid[k] = s.s[r][k];
                holder[k] = Some(r);
                held[r] = Some(k);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let assignment: BTreeMap<usize, usize> = held
        .iter()
        .enumerate()
        .filter_map(|(r, k)| k.map(|k| (r, k)))
        .collect();
    let unmatched = (0..n_robots).filter(|r| held[*r].is_none()).collect();
    ClusterAssignment {
        assignment,
        unmatched,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster_stats;

    #[test]
    fn specialization_examples() {
        let psi = cluster_stats(&[2.0, 0.0], 0.1);
        assert!((specialization(&psi, &[1.0, 0.0]) - 2.1 / 2.2).abs() < 1e-12);
        assert!((specialization(&psi, &[1.0, 0.0]) - 0.954545).abs() < 1e-6);
        assert_eq!(specialization(&[0.5, 0.5], &[0.5, 0.5]), 0.5);
        let orthogonal = specialization(&cluster_stats(&[3.0, 0.0], 0.1), &[0.0, 1.0]);
        assert!(orthogonal > 0.0 && orthogonal < 0.05);
    }

    fn cluster(id: usize, counts: Vec<f64>, weight: f64) -> Cluster {
        Cluster {
            id,
            task_ids: Vec::new(),
            center: crate::geometry::Point::new(0.0, 0.0),
            psi: cluster_stats(&counts, 0.1),
            type_counts: counts,
            weight,
        }
    }

    #[test]
    fn score_arithmetic_and_incompatibility() {
        let robots = vec![Robot::new(0, NodeId(0), vec![1.0, 0.0], 2)];
        let clusters = vec![cluster(0, vec![1.0, 0.0], 1.0), cluster(1, vec![0.0, 3.0], 1.0)];
        let s = ScoreMatrix::assemble(&robots, &clusters, vec![vec![4.0, 1.0]], vec![vec![0.5, 0.9]]);
        assert_eq!(s.s[0][0], 8.0);
        assert_eq!(s.s[0][1], f64::INFINITY);
        let unreachable = ScoreMatrix::assemble(&robots, &clusters, vec![vec![f64::INFINITY, 1.0]], vec![vec![0.5, 0.5]]);
        assert_eq!(unreachable.s[0][0], f64::INFINITY);
        let res = auction(&unreachable);
        assert_eq!(res.unmatched, vec![0]);
    }

    #[test]
    fn priority_weight_divides_score() {
        let robots = vec![Robot::new(0, NodeId(0), vec![1.0], 2)];
        let clusters = vec![cluster(0, vec![1.0], 1.0), cluster(1, vec![1.0], 10.0)];
        let s = ScoreMatrix::assemble(&robots, &clusters, vec![vec![4.0, 20.0]], vec![vec![1.0, 1.0]]);
        assert_eq!(s.s[0], vec![4.0, 2.0]);
        assert_eq!(auction(&s).assignment[&0], 1);
    }

    #[test]
    fn single_robot_single_cluster() {
        let res = auction(&ScoreMatrix::from_scores(vec![vec![3.0]]));
        assert_eq!(res.assignment.get(&0), Some(&0));
        assert!(res.unmatched.is_empty());
    }

    #[test]
    fn hand_traced_examples() {
        let res = auction(&ScoreMatrix::from_scores(vec![vec![1.0, 5.0], vec![2.0, 9.0]]));
        assert_eq!(res.assignment, BTreeMap::from([(0, 0), (1, 1)]));
        let res = auction(&ScoreMatrix::from_scores(vec![vec![1.0, 5.0], vec![0.5, 9.0]]));
        assert_eq!(res.assignment, BTreeMap::from([(1, 0), (0, 1)]));
    }

    #[test]
    fn more_robots_than_clusters_leaves_some_unmatched() {
        let res = auction(&ScoreMatrix::from_scores(vec![vec![1.0], vec![2.0], vec![0.5]]));
        assert_eq!(res.assignment, BTreeMap::from([(2, 0)]));
        assert_eq!(res.unmatched, vec![0, 1]);
    }
}
