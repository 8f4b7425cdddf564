//! Benchmark harness for the adaptive-merging simulator.
//!
//! One invocation runs one experiment per selectivity value: a convergence
//! run when `--pattern` drives it, a workload run with `--workload`, or a
//! trace replay with `--trace-in`. Results append as CSV rows to stdout or
//! `--csv`.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;

use pamsim::bench::{
    emit_csv, run_convergence, run_dynamic, run_trace, ExperimentConfig, IndexKind, MethodKind,
    ResultRow,
};
use pamsim::merging::InvalidationStrategy;
use pamsim::workload::{make_workload, read_trace, write_trace, Op, PatternKind, WorkloadSpec};

#[derive(Parser, Debug)]
#[command(name = "pamsim", about = "Adaptive-merging-on-PCM benchmark harness")]
struct Cli {
    /// Merge method: am, eam, pam
    #[arg(long, default_value = "pam")]
    method: String,

    /// Main index (pam and index workloads): bb, sb, ub
    #[arg(long, default_value = "bb")]
    index: String,

    /// Partition invalidation strategy (am/eam): flag, bitmap, journal
    #[arg(long, default_value = "bitmap")]
    invalidation: String,

    /// Convergence query pattern: random, sequential, newkeys
    #[arg(long, default_value = "random")]
    pattern: String,

    /// Range-query selectivity in percent; comma-separated values sweep
    #[arg(long, default_value = "5")]
    selectivity: String,

    /// Workload name: A, B, C, D, write, read, balanced
    #[arg(long)]
    workload: Option<String>,

    /// Divisor applied to workload op counts
    #[arg(long, default_value_t = 100)]
    scale: usize,

    /// Table size in rows (keys 0..rows)
    #[arg(long, default_value_t = 1_000_000)]
    rows: u64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Extra key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Append result rows to this CSV file instead of stdout
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Replay an operation trace instead of generating one
    #[arg(long)]
    trace_in: Option<PathBuf>,

    /// Write the generated workload trace and exit
    #[arg(long)]
    trace_out: Option<PathBuf>,

    /// Parallel experiments for the selectivity sweep
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn build_config(cli: &Cli, selectivity: f64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        method: MethodKind::parse(&cli.method)
            .ok_or_else(|| anyhow!("unknown method: {}", cli.method))?,
        index: IndexKind::parse(&cli.index)
            .ok_or_else(|| anyhow!("unknown index: {}", cli.index))?,
        invalidation: InvalidationStrategy::parse(&cli.invalidation)
            .ok_or_else(|| anyhow!("unknown invalidation strategy: {}", cli.invalidation))?,
        pattern: PatternKind::parse(&cli.pattern)
            .ok_or_else(|| anyhow!("unknown pattern: {}", cli.pattern))?,
        selectivity,
        workload: cli.workload.clone(),
        scale: cli.scale,
        rows: cli.rows,
        seed: cli.seed,
        ..ExperimentConfig::default()
    };
    if !(0.0..=100.0).contains(&selectivity) || selectivity <= 0.0 {
        bail!("selectivity must be in (0, 100] percent");
    }
    cfg.selectivity = selectivity / 100.0;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_config_text(&text).map_err(|e| anyhow!(e))?;
    }
    Ok(cfg)
}

fn run_one(cfg: &ExperimentConfig, trace: Option<&[Op]>) -> Result<ResultRow> {
    if let Some(ops) = trace {
        Ok(run_trace(cfg, ops))
    } else if cfg.workload.is_some() {
        run_dynamic(cfg).map_err(|e| anyhow!(e))
    } else {
        Ok(run_convergence(cfg))
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    let selectivities: Vec<f64> = cli
        .selectivity
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad selectivity: {s}"))
        })
        .collect::<Result<_>>()?;

    if let Some(path) = &cli.trace_out {
        let cfg = build_config(&cli, selectivities[0])?;
        let name = cfg.workload.as_deref().ok_or_else(|| anyhow!("--trace-out needs --workload"))?;
        let mut spec =
            WorkloadSpec::builtin(name).ok_or_else(|| anyhow!("unknown workload: {name}"))?;
        spec.scale = cfg.scale;
        spec.selectivity = cfg.selectivity;
        let ops = make_workload(&spec, cfg.rows, cfg.seed ^ 0x51ed_2701);
        let mut f = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        write_trace(&ops, &mut f)?;
        return Ok(());
    }

    let trace: Option<Vec<Op>> = match &cli.trace_in {
        Some(path) => {
            let f = fs::File::open(path)
                .with_context(|| format!("opening trace {}", path.display()))?;
            Some(read_trace(BufReader::new(f))?)
        }
        None => None,
    };

    let configs: Vec<ExperimentConfig> = selectivities
        .iter()
        .map(|&s| build_config(&cli, s))
        .collect::<Result<_>>()?;

    let jobs = cli.jobs.max(1);
    let mut rows: Vec<ResultRow> = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(jobs) {
        let handles: Vec<_> = chunk
            .iter()
            .map(|cfg| {
                let cfg = cfg.clone();
                let trace = trace.clone();
                thread::spawn(move || run_one(&cfg, trace.as_deref()))
            })
            .collect();
        for h in handles {
            rows.push(h.join().map_err(|_| anyhow!("worker panicked"))??);
        }
    }

    let csv = emit_csv(&rows);
    match &cli.csv {
        Some(path) => {
            let mut f = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            f.write_all(csv.as_bytes())?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
