use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mrta_cli::output::{create, write_roadmap, write_run};
use mrta_cli::server::{router, run_clock, AppState, ServeConfig, Translator};
use mrta_core::audit::audit;
use mrta_core::bench::{run_benchmark, write_aggregates_csv, write_rows_csv, write_sensitivity_csv, BenchmarkSuite};
use mrta_core::executor::{read_trace, Simulation, Status};
use mrta_core::generator::{maze_scenario, MazeParams};
use mrta_core::halton::{sample_map, write_samples_csv};
use mrta_core::scenario::{load_scenario, AllocatorKind, Scenario};

#[derive(Parser)]
#[command(name = "mrta", version, about = "Multi-robot pickup-and-delivery planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Allocator to use instead of the scenario's (oath, cbba, kan, kam).
    #[arg(long)]
    allocator: Option<AllocatorKind>,
    /// Seed for sampling and planning.
    #[arg(long)]
    seed: Option<u64>,
    /// Give up after this many steps.
    #[arg(long = "steps-cap")]
    steps_cap: Option<u64>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(a) = self.allocator {
            s.allocator = a;
        }
        if let Some(seed) = self.seed {
            s.sampling.seed = seed;
            s.planner.seed = seed;
        }
        if let Some(cap) = self.steps_cap {
            s.planner.step_cap = cap;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario to completion.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for trace.jsonl, metrics.csv and metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark sweep over generated maze scenarios.
    Bench {
        /// Suite file (JSON); defaults to one 25-task cell for every allocator.
        suite: Option<PathBuf>,
        /// Restrict to one allocator.
        #[arg(long)]
        allocator: Option<AllocatorKind>,
        /// Use only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        robots: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        capacity: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Directory for results.csv, aggregates.csv and sensitivity.csv.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Serve a live session over HTTP.
    Serve {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Milliseconds between simulation steps.
        #[arg(long = "pace-ms", default_value_t = 200)]
        pace_ms: u64,
        /// Start paused; use the step or resume controls.
        #[arg(long)]
        paused: bool,
        /// End the session once every task is delivered.
        #[arg(long)]
        finish: bool,
        /// External translator program and arguments.
        #[arg(long, num_args = 1.., allow_hyphen_values = true)]
        translator: Option<Vec<String>>,
        /// Directory for the trace and metrics when the run ends.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the roadmap only and write samples, nodes, edges and site distances as CSV.
    Map {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "map-out")]
        out: PathBuf,
    },
    /// Print a generated maze scenario as JSON.
    Generate {
        #[arg(long, default_value_t = 25)]
        tasks: usize,
        #[arg(long, default_value_t = 4)]
        robots: usize,
        #[arg(long, default_value_t = 3)]
        capacity: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leave out the obstacles that start hidden.
        #[arg(long)]
        no_hidden: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace file against the allocation constraints.
    Audit { trace: PathBuf },
}

fn load(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let mut s = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    overrides.apply(&mut s);
    if s.name.is_empty() {
        s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    }
    s.validate()?;
    Ok(s)
}

fn cmd_run(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<bool> {
    let scenario = load(path, overrides)?;
    let mut sim = Simulation::new(&scenario)?;
    sim.run_to_end()?;
    let metrics = sim.metrics();
    let report = audit(sim.events());
    if let Some(dir) = out {
        write_run(dir, &scenario, sim.events(), &metrics)?;
    }
    println!(
        "{}: {} allocator={} steps={} S_total={} delivered={}/{} T_alloc={:.3}s T_total={:.3}s",
        scenario.name,
        match sim.status() {
            Status::Succeeded => "success".to_string(),
            Status::Failed { reason, .. } => format!("failed ({reason})"),
            Status::Running => "running".to_string(),
        },
        metrics.allocator,
        metrics.steps,
        metrics.s_total,
        metrics.tasks_delivered,
        metrics.tasks_total,
        metrics.t_alloc,
        metrics.t_total,
    );
    for v in &report.violations {
        eprintln!("audit: {v}");
    }
    Ok(metrics.success && report.is_clean())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    suite: Option<&Path>,
    allocator: Option<AllocatorKind>,
    seed: Option<u64>,
    tasks: Option<Vec<usize>>,
    robots: Option<Vec<usize>>,
    capacity: Option<Vec<u32>>,
    seeds: Option<Vec<u64>>,
    out: &Path,
) -> Result<()> {
    let mut suite: BenchmarkSuite = match suite {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => BenchmarkSuite::default(),
    };
    if let Some(a) = allocator {
        suite.allocators = vec![a];
    }
    if let Some(v) = tasks {
        suite.tasks = v;
    }
    if let Some(v) = robots {
        suite.robots = v;
    }
    if let Some(v) = capacity {
        suite.capacity = v;
    }
    if let Some(v) = seeds {
        suite.seeds = v;
    }
    if let Some(s) = seed {
        suite.seeds = vec![s];
    }
    let res = run_benchmark(&suite)?;
    write_rows_csv(&res.rows, create(out, "results.csv")?)?;
    write_aggregates_csv(&res.aggregates, create(out, "aggregates.csv")?)?;
    write_sensitivity_csv(&res.sensitivity, create(out, "sensitivity.csv")?)?;
    println!("allocator    P    R  Q  runs  ok  S_total(mean)  T_alloc(mean)");
    for a in &res.aggregates {
        println!(
            "{:<9} {:>4} {:>4} {:>2} {:>5} {:>3} {:>14.1} {:>14.4}",
            a.allocator.name(),
            a.p,
            a.r,
            a.q,
            a.runs,
            a.successes,
            a.s_total_mean,
            a.t_alloc_mean
        );
    }
    for s in &res.sensitivity {
        println!("sensitivity {} over {}: {:.6} s/unit", s.allocator, s.axis, s.value);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_serve(path: &Path, overrides: &Overrides, port: u16, config: ServeConfig) -> Result<()> {
    let scenario = load(path, overrides)?;
    let sim = Simulation::new(&scenario)?;
    let state = AppState::new(scenario, sim, config);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        tokio::spawn(run_clock(state.clone()));
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        state.save_now();
        Ok(())
    })
}

fn cmd_map(path: &Path, overrides: &Overrides, out: &Path) -> Result<()> {
    let scenario = load(path, overrides)?;
    let ws = scenario.build_workspace()?;
    let samples = sample_map(&ws, &scenario.sampling)?;
    write_samples_csv(&samples, create(out, "samples.csv")?)?;
    let sim = Simulation::new(&scenario)?;
    let rm = sim.roadmap();
    write_roadmap(out, rm)?;
    println!("{} nodes, {} edges written to {}", rm.node_count(), rm.edge_count(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, overrides, out } => {
            if !cmd_run(&scenario, &overrides, out.as_deref())? {
                std::process::exit(1);
            }
        }
        Command::Bench {
            suite,
            allocator,
            seed,
            tasks,
            robots,
            capacity,
            seeds,
            out,
        } => cmd_bench(suite.as_deref(), allocator, seed, tasks, robots, capacity, seeds, &out)?,
        Command::Serve {
            scenario,
            overrides,
            port,
            pace_ms,
            paused,
            finish,
            translator,
            out,
        } => {
            let config = ServeConfig {
                pace: Duration::from_millis(pace_ms.max(1)),
                live: !finish,
                start_paused: paused,
                translator: translator.map_or(Translator::Rules, Translator::Command),
                out,
            };
            cmd_serve(&scenario, &overrides, port, config)?
        }
        Command::Map { scenario, overrides, out } => cmd_map(&scenario, &overrides, &out)?,
        Command::Generate {
            tasks,
            robots,
            capacity,
            seed,
            no_hidden,
            out,
        } => {
            let s = maze_scenario(&MazeParams {
                n_tasks: tasks,
                n_robots: robots,
                capacity,
                seed,
                hidden_obstacles: !no_hidden,
                ..Default::default()
            });
            let text = s.to_json()?;
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => writeln!(std::io::stdout(), "{text}")?,
            }
        }
        Command::Audit { trace } => {
            let f = std::fs::File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let events = read_trace(BufReader::new(f))?;
            let report = audit(&events);
            println!(
                "{} moves, {} pickups, {} deliveries, success={}",
                report.moves, report.pickups, report.deliveries, report.success
            );
            for v in &report.violations {
                println!("violation: {v}");
            }
            if !report.is_clean() {
                bail!("{} violations", report.violations.len());
            }
        }
    }
    Ok(())
}
