//! Batch benchmarks: sweep task count, team size and capacity over seeds and
//! allocators, one simulation per cell.

use std::collections::BTreeMap;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{run_with, sensitivity};
use crate::generator::{maze_scenario, MazeParams};
use crate::scenario::AllocatorKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSuite {
    /// Base scenario; the sweep overrides its task count, team size, capacity and seed.
    pub template: MazeParams,
    pub allocators: Vec<AllocatorKind>,
    pub tasks: Vec<usize>,
    pub robots: Vec<usize>,
    pub capacity: Vec<u32>,
    pub seeds: Vec<u64>,
    pub repetitions: u32,
}

impl Default for BenchmarkSuite {
    fn default() -> Self {
        Self {
            template: MazeParams::default(),
            allocators: AllocatorKind::ALL.to_vec(),
            tasks: vec![25],
            robots: vec![4],
            capacity: vec![3],
            seeds: vec![0],
            repetitions: 1,
        }
    }
}

impl BenchmarkSuite {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, empty) in [
            ("allocators", self.allocators.is_empty()),
            ("tasks", self.tasks.is_empty()),
            ("robots", self.robots.is_empty()),
            ("capacity", self.capacity.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                problems.push(format!("sweep axis '{name}' is empty"));
            }
        }
        if self.robots.contains(&0) {
            problems.push("robot counts must be positive".into());
        }
        if self.capacity.contains(&0) {
            problems.push("capacities must be positive".into());
        }
        if self.repetitions == 0 {
            problems.push("repetitions must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub allocator: AllocatorKind,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "Q")]
    pub q: u32,
    pub seed: u64,
    #[serde(rename = "T_alloc")]
    pub t_alloc: f64,
    #[serde(rename = "S_total")]
    pub s_total: u64,
    #[serde(rename = "T_total")]
    pub t_total: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub allocator: AllocatorKind,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "Q")]
    pub q: u32,
    pub runs: usize,
    pub successes: usize,
    pub t_alloc_mean: f64,
    pub t_alloc_std: f64,
    pub s_total_mean: f64,
    pub s_total_std: f64,
    pub t_total_mean: f64,
    pub t_total_std: f64,
}

/// Allocation-time sensitivity of one allocator along one sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub allocator: AllocatorKind,
    pub axis: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchResults {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
    pub sensitivity: Vec<Sensitivity>,
}

/// Runs every cell. A failing run is recorded with `success = false` and the suite continues.
pub fn run_benchmark(suite: &BenchmarkSuite) -> Result<BenchResults> {
    suite.validate()?;
    let mut rows = Vec::new();
    for &allocator in &suite.allocators {
        for &p in &suite.tasks {
            for &r in &suite.robots {
                for &q in &suite.capacity {
                    for &seed in &suite.seeds {
                        for _ in 0..suite.repetitions {
                            let params = MazeParams {
                                n_tasks: p,
                                n_robots: r,
                                capacity: q,
                                seed,
                                allocator,
                                ..suite.template.clone()
                            };
                            let scenario = maze_scenario(&params);
                            let row = match run_with(&scenario, allocator) {
                                Ok(out) => BenchRow {
                                    allocator,
                                    p,
                                    r,
                                    q,
                                    seed,
                                    t_alloc: out.metrics.t_alloc,
                                    s_total: out.metrics.s_total,
                                    t_total: out.metrics.t_total,
                                    success: out.metrics.success,
                                },
                                Err(e) => {
                                    warn!("{} failed: {e}", scenario.name);
                                    BenchRow {
                                        allocator,
                                        p,
                                        r,
                                        q,
                                        seed,
                                        t_alloc: 0.0,
                                        s_total: 0,
                                        t_total: 0.0,
                                        success: false,
                                    }
                                }
                            };
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
    let aggregates = aggregate(&rows);
    let sensitivity = sensitivities(&aggregates);
    Ok(BenchResults {
        rows,
        aggregates,
        sensitivity,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation per (allocator, P, R, Q) cell.
pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut cells: BTreeMap<(AllocatorKind, usize, usize, u32), Vec<&BenchRow>> = BTreeMap::new();
    for row in rows {
        cells.entry((row.allocator, row.p, row.r, row.q)).or_default().push(row);
    }
    cells
        .into_iter()
        .map(|((allocator, p, r, q), rs)| {
            let col = |f: fn(&BenchRow) -> f64| mean_std(&rs.iter().map(|x| f(x)).collect::<Vec<_>>());
            let (t_alloc_mean, t_alloc_std) = col(|x| x.t_alloc);
            let (s_total_mean, s_total_std) = col(|x| x.s_total as f64);
            let (t_total_mean, t_total_std) = col(|x| x.t_total);
            Aggregate {
                allocator,
                p,
                r,
                q,
                runs: rs.len(),
                successes: rs.iter().filter(|x| x.success).count(),
                t_alloc_mean,
                t_alloc_std,
                s_total_mean,
                s_total_std,
                t_total_mean,
                t_total_std,
            }
        })
        .collect()
}

/// Sensitivity of mean allocation time along every axis with at least two values.
pub fn sensitivities(aggregates: &[Aggregate]) -> Vec<Sensitivity> {
    let mut out = Vec::new();
    let allocators: Vec<AllocatorKind> = {
        let mut v: Vec<_> = aggregates.iter().map(|a| a.allocator).collect();
        v.dedup();
        v
    };
    let axes: [(&str, fn(&Aggregate) -> u64); 3] = [
        ("P", |a| a.p as u64),
        ("R", |a| a.r as u64),
        ("Q", |a| a.q as u64),
    ];
    for kind in allocators {
        for (axis, key) in axes {
            let mut by_level: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for a in aggregates.iter().filter(|a| a.allocator == kind) {
                by_level.entry(key(a)).or_default().push(a.t_alloc_mean);
            }
            let times: BTreeMap<u64, f64> = by_level
                .into_iter()
                .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
                .collect();
            if let Ok(value) = sensitivity(&times) {
                out.push(Sensitivity {
                    allocator: kind,
                    axis: axis.to_string(),
                    value,
                });
            }
        }
    }
    out
}

pub fn write_rows_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(aggregates: &[Aggregate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for a in aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity_csv<W: Write>(rows: &[Sensitivity], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in rows {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
