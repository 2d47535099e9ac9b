//! Flat-file outputs: traces, metrics rows and roadmap tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mrta_core::bench::{write_rows_csv, BenchRow};
use mrta_core::executor::{write_trace, Event, Metrics};
use mrta_core::roadmap::Roadmap;
use mrta_core::scenario::Scenario;
use mrta_core::NodeId;

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// The metrics row for one run, in the benchmark CSV layout.
pub fn metrics_row(scenario: &Scenario, metrics: &Metrics) -> BenchRow {
    BenchRow {
        allocator: metrics.allocator,
        p: scenario.tasks.len(),
        r: scenario.robots.len(),
        q: scenario.robots.iter().map(|r| r.capacity).max().unwrap_or(0),
        seed: scenario.planner.seed,
        t_alloc: metrics.t_alloc,
        s_total: metrics.s_total,
        t_total: metrics.t_total,
        success: metrics.success,
    }
}

/// Writes `trace.jsonl`, `metrics.csv` and `metrics.json` into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, trace: &[Event], metrics: &Metrics) -> Result<()> {
    let mut w = create(dir, "trace.jsonl")?;
    write_trace(trace, &mut w)?;
    w.flush()?;
    let w = create(dir, "metrics.csv")?;
    write_rows_csv(&[metrics_row(scenario, metrics)], w)?;
    let mut w = create(dir, "metrics.json")?;
    serde_json::to_writer_pretty(&mut w, metrics)?;
    w.flush()?;
    Ok(())
}

/// Writes `nodes.csv`, `edges.csv` and `distances.csv` (between tagged nodes).
pub fn write_roadmap(dir: &Path, rm: &Roadmap) -> Result<()> {
    rm.write_nodes_csv(create(dir, "nodes.csv")?)?;
    rm.write_edges_csv(create(dir, "edges.csv")?)?;
    let tagged: Vec<NodeId> = rm.node_ids().filter(|&n| rm.node(n).is_some_and(|x| !x.tags.is_empty())).collect();
    rm.distance_matrix(&tagged)?.write_csv(create(dir, "distances.csv")?)?;
    Ok(())
}
