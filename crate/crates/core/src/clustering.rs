//! Obstacle-aware task clustering.
//!
//! Tasks are grouped by average-linkage agglomerative clustering over the
//! shortest-path distances between their pickup locations, so two pickups on
//! opposite sides of a wall look as far apart as the detour between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, Point};
use crate::ids::{NodeId, TaskId};
use crate::roadmap::{DistanceMatrix, Roadmap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    #[default]
    Unassigned,
    Assigned,
    Picked,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub pickup: NodeId,
    pub delivery: NodeId,
    pub task_type: usize,
    pub priority: f64,
    pub state: TaskState,
}

impl Task {
    pub fn new(id: u32, pickup: NodeId, delivery: NodeId, task_type: usize) -> Self {
        Self {
            id: TaskId(id),
            pickup,
            delivery,
            task_type,
            priority: 1.0,
            state: TaskState::Unassigned,
        }
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        if self.pickup == self.delivery {
            return Err(Error::Domain(format!("task {} has identical pickup and delivery", self.id)));
        }
        if !(self.priority > 0.0 && self.priority.is_finite()) {
            return Err(Error::Domain(format!("task {} priority must be positive", self.id)));
        }
        if self.task_type >= n_types {
            return Err(Error::Domain(format!(
                "task {} type {} outside 0..{n_types}",
                self.id, self.task_type
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub task_ids: Vec<TaskId>,
    /// Mean of the member pickup positions.
    pub center: Point,
    pub type_counts: Vec<f64>,
    /// Smoothed type composition; sums to one.
    pub psi: Vec<f64>,
    /// Highest member priority.
    pub weight: f64,
}

impl Cluster {
    /// Summarises a non-empty set of member tasks.
    pub fn from_members(id: usize, members: &[&Task], rm: &Roadmap, n_types: usize, theta: f64) -> Self {
        assert!(!members.is_empty(), "clusters are never empty");
        let mut type_counts = vec![0.0; n_types];
        for t in members {
            type_counts[t.task_type] += 1.0;
        }
        let pickups: Vec<Point> = members.iter().map(|t| rm.position(t.pickup)).collect();
        let mut task_ids: Vec<TaskId> = members.iter().map(|t| t.id).collect();
        task_ids.sort();
        let psi = cluster_stats(&type_counts, theta);
        let weight = members.iter().map(|t| t.priority).fold(f64::MIN, f64::max);
        Self {
            id,
            task_ids,
            center: centroid(&pickups),
            type_counts,
            psi,
            weight,
        }
    }

    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }
}

/// Smoothed composition `(N + theta) / sum(N + theta)`.
pub fn cluster_stats(type_counts: &[f64], theta: f64) -> Vec<f64> {
    let total: f64 = type_counts.iter().map(|c| c + theta).sum();
    type_counts.iter().map(|c| (c + theta) / total).collect()
}

/// Cluster count for a round: a few more clusters than robots, never more than tasks.
pub fn choose_k(n_tasks: usize, n_robots: usize) -> usize {
    assert!(n_robots >= 1, "choose_k needs at least one robot");
    if n_tasks < n_robots {
        return n_tasks;
    }
    let scaled = (1.5 * n_robots as f64).ceil() as usize;
    n_tasks.min((n_robots + 1).max(scaled))
}

/// Average-linkage agglomerative clustering of tasks by pickup-to-pickup distance.
///
/// Tasks unreachable from every other task become singletons first. Merging
/// stops at `k` clusters, or earlier when only infinite linkages remain.
/// Ties are broken by the smallest member task ids, so the partition does not
/// depend on input order. Groups are returned sorted by smallest member.
pub fn cluster_tasks(tasks: &[Task], m: &DistanceMatrix, k: usize) -> Result<Vec<Vec<TaskId>>> {
    if tasks.is_empty() {
        return Ok(Vec::new());
    }
    if k == 0 || k > tasks.len() {
        return Err(Error::Domain(format!(
            "cluster count {k} must be in 1..={}",
            tasks.len()
        )));
    }
    let mut sorted: Vec<&Task> = tasks.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let n = sorted.len();
    let index: Vec<usize> = sorted
        .iter()
        .map(|t| {
            m.index_of(t.pickup)
                .ok_or_else(|| Error::Domain(format!("pickup of task {} missing from distance matrix", t.id)))
        })
        .collect::<Result<_>>()?;
    let dist = |a: usize, b: usize| m.get(index[a], index[b]);

    let isolated: Vec<bool> = (0..n)
        .map(|i| n > 1 && (0..n).all(|j| j == i || !dist(i, j).is_finite()))
        .collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut singles: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if isolated[i] {
            singles.push(vec![i]);
        } else {
            groups.push(vec![i]);
        }
    }
    let target = k.saturating_sub(singles.len()).max(1);

    // Linkage between active groups; updated with the Lance-Williams rule.
    let g = groups.len();
    let mut link = vec![vec![f64::INFINITY; g]; g];
    for a in 0..g {
        for b in 0..g {
            if a != b {
                link[a][b] = dist(groups[a][0], groups[b][0]);
            }
        }
    }
    let mut active: Vec<bool> = vec![true; g];
    let mut remaining = g;
    while remaining > target {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..g {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..g {
                if !active[b] || !link[a][b].is_finite() {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((d, ba, bb)) => {
                        link[a][b] < d
                            || (link[a][b] == d && (groups[a][0], groups[b][0]) < (groups[ba][0], groups[bb][0]))
                    }
                };
                if better {
                    best = Some((link[a][b], a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let (na, nb) = (groups[a].len() as f64, groups[b].len() as f64);
        for c in 0..g {
            if active[c] && c != a && c != b {
                let merged = (na * link[a][c] + nb * link[b][c]) / (na + nb);
                link[a][c] = merged;
                link[c][a] = merged;
            }
        }
        let moved = std::mem::take(&mut groups[b]);
        groups[a].extend(moved);
        groups[a].sort_unstable();
        active[b] = false;
        remaining -= 1;
    }

    let mut out: Vec<Vec<TaskId>> = groups
        .into_iter()
        .zip(active)
        .filter(|(grp, alive)| *alive && !grp.is_empty())
        .map(|(grp, _)| grp)
        .chain(singles)
        .map(|grp| grp.into_iter().map(|i| sorted[i].id).collect())
        .collect();
    out.sort();
    Ok(out)
}

/// Clusters `tasks` and summarises each group.
pub fn build_clusters(
    tasks: &[Task],
    m: &DistanceMatrix,
    k: usize,
    rm: &Roadmap,
    n_types: usize,
    theta: f64,
) -> Result<Vec<Cluster>> {
    let by_id: BTreeMap<TaskId, &Task> = tasks.iter().map(|t| (t.id, t)).collect();
    Ok(cluster_tasks(tasks, m, k)?
        .into_iter()
        .enumerate()
        .map(|(cid, ids)| {
            let members: Vec<&Task> = ids.iter().map(|id| by_id[id]).collect();
            Cluster::from_members(cid, &members, rm, n_types, theta)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
        DistanceMatrix {
            locations: (0..n as u32).map(NodeId).collect(),
            m: (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { f(i, j) }).collect()).collect(),
            predecessors: None,
        }
    }

    fn tasks(n: usize) -> Vec<Task> {
        (0..n as u32).map(|i| Task::new(i, NodeId(i), NodeId(100 + i), 0)).collect()
    }

    #[test]
    fn choose_k_examples() {
        assert_eq!(choose_k(3, 10), 3);
        assert_eq!(choose_k(100, 10), 15);
        assert_eq!(choose_k(5, 4), 5);
        assert_eq!(choose_k(0, 4), 0);
        assert_eq!(choose_k(20, 4), 6);
        assert_eq!(choose_k(20, 1), 2);
    }

    #[test]
    fn cluster_stats_examples() {
        assert_eq!(cluster_stats(&[2.0, 2.0], 0.0), vec![0.5, 0.5]);
        let psi = cluster_stats(&[3.0, 0.0], 0.1);
        assert!((psi[0] - 0.96875).abs() < 1e-12);
        assert!((psi[1] - 0.03125).abs() < 1e-12);
    }

    #[test]
    fn k_equal_to_n_gives_singletons() {
        let ts = tasks(4);
        let m = matrix(4, |i, j| (i as f64 - j as f64).abs());
        let parts = cluster_tasks(&ts, &m, 4).unwrap();
        assert_eq!(parts.len(), 4);
        assert!(parts.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn wall_separated_groups_stay_apart() {
        // 0,1 on the left; 2,3 on the right; crossing costs a long detour
        // although 1 and 2 are close in straight-line terms.
        let side = |i: usize| i / 2;
        let m = matrix(4, |i, j| if side(i) == side(j) { 1.0 } else { 30.0 });
        let parts = cluster_tasks(&tasks(4), &m, 2).unwrap();
        assert_eq!(parts, vec![vec![TaskId(0), TaskId(1)], vec![TaskId(2), TaskId(3)]]);
    }

    #[test]
    fn unreachable_tasks_become_singletons() {
        let m = matrix(4, |i, j| if i == 3 || j == 3 { f64::INFINITY } else { 1.0 });
        let parts = cluster_tasks(&tasks(4), &m, 2).unwrap();
        assert_eq!(parts, vec![vec![TaskId(0), TaskId(1), TaskId(2)], vec![TaskId(3)]]);
    }

    #[test]
    fn empty_and_bad_k() {
        let m = matrix(0, |_, _| 0.0);
        assert!(cluster_tasks(&[], &m, 3).unwrap().is_empty());
        let m = matrix(2, |_, _| 1.0);
        assert!(cluster_tasks(&tasks(2), &m, 3).is_err());
        assert!(cluster_tasks(&tasks(2), &m, 0).is_err());
    }

    #[test]
    fn ties_break_on_smallest_ids() {
        let m = matrix(3, |_, _| 1.0);
        let parts = cluster_tasks(&tasks(3), &m, 2).unwrap();
        assert_eq!(parts, vec![vec![TaskId(0), TaskId(1)], vec![TaskId(2)]]);
    }
}
