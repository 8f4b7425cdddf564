//! Experiment harness: wires a device, a method (or bare index) and a
//! workload together, and reports one CSV row per run. Simulated PCM time is
//! the authoritative metric; host wall time is context only.

use std::fmt::Write as _;
use std::time::Instant;

use crate::bbtree::BbTree;
use crate::device::{DeviceConfig, SimDevice};
use crate::entry::Entry;
use crate::index::{IndexConfig, MergeIndex, PlainTree};
use crate::merging::{Am, Eam, InvalidationStrategy, Method};
use crate::pam::{Pam, PamConfig};
use crate::workload::{
    make_dataset, make_workload, Op, PatternGen, PatternKind, PatternSpec, WorkloadSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Am,
    Eam,
    Pam,
}

impl MethodKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "am" => Some(MethodKind::Am),
            "eam" => Some(MethodKind::Eam),
            "pam" => Some(MethodKind::Pam),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Am => "am",
            MethodKind::Eam => "eam",
            MethodKind::Pam => "pam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Bb,
    Sb,
    Ub,
}

impl IndexKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bb" => Some(IndexKind::Bb),
            "sb" => Some(IndexKind::Sb),
            "ub" => Some(IndexKind::Ub),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Bb => "bb",
            IndexKind::Sb => "sb",
            IndexKind::Ub => "ub",
        }
    }

    pub fn config(&self) -> IndexConfig {
        match self {
            IndexKind::Bb => IndexConfig::bb(),
            IndexKind::Sb => IndexConfig::sb(),
            IndexKind::Ub => IndexConfig::ub(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub method: MethodKind,
    pub index: IndexKind,
    pub invalidation: InvalidationStrategy,
    pub pattern: PatternKind,
    pub selectivity: f64,
    pub workload: Option<String>,
    pub scale: usize,
    pub rows: u64,
    pub seed: u64,
    pub partition_capacity: usize,
    pub journal_coalesce: bool,
    pub pool_capacity: usize,
    pub device: DeviceConfig,
    /// Geometry overrides; `None` keeps the index kind's default.
    pub leaf_fanout: Option<usize>,
    pub inner_fanout: Option<usize>,
    pub sorted_slots: Option<usize>,
    pub buffer_threshold: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: MethodKind::Pam,
            index: IndexKind::Bb,
            invalidation: InvalidationStrategy::Bitmap,
            pattern: PatternKind::Random,
            selectivity: 0.05,
            workload: None,
            scale: 100,
            rows: 1_000_000,
            seed: 1,
            partition_capacity: 65_536,
            journal_coalesce: true,
            pool_capacity: 4096,
            device: DeviceConfig::with_capacity(0),
            leaf_fanout: None,
            inner_fanout: None,
            sorted_slots: None,
            buffer_threshold: None,
        }
    }
}

impl ExperimentConfig {
    pub fn index_config(&self) -> IndexConfig {
        let mut cfg = self.index.config();
        if let Some(f) = self.leaf_fanout {
            cfg.tree.leaf_fanout = f;
            match self.index {
                IndexKind::Ub => cfg.tree.unsorted_slots = f,
                _ => {
                    let s = self.sorted_slots.unwrap_or(cfg.tree.sorted_slots.min(f));
                    cfg.tree.sorted_slots = s;
                    cfg.tree.unsorted_slots = f - s;
                }
            }
        } else if let Some(s) = self.sorted_slots {
            cfg.tree.sorted_slots = s;
            cfg.tree.unsorted_slots = cfg.tree.leaf_fanout - s;
        }
        if let Some(f) = self.inner_fanout {
            cfg.tree.inner_fanout = f;
        }
        if let Some(t) = self.buffer_threshold {
            cfg.buffer_threshold = t;
        }
        cfg.tree.validate().expect("tree geometry");
        cfg
    }

    /// Device sized to hold partitions, index and logs with headroom unless
    /// a capacity was set explicitly.
    pub fn device_config(&self) -> DeviceConfig {
        let mut d = self.device.clone();
        if d.capacity_bytes == 0 {
            d.capacity_bytes = ((self.rows as usize) * 16 * 8 + (1 << 22)).div_ceil(64) * 64;
        }
        d
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<(), String> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("expected key = value: {raw}"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<usize>().map_err(|_| format!("bad number for {key}: {value}"));
            match key {
                "line_size" => self.device.line_size = num()?,
                "read_latency_ns" => self.device.read_latency_ns = num()? as u64,
                "write_latency_ns" => self.device.write_latency_ns = num()? as u64,
                "ranks" => self.device.ranks = num()?,
                "capacity_bytes" => self.device.capacity_bytes = num()?,
                "leaf_fanout" => self.leaf_fanout = Some(num()?),
                "inner_fanout" => self.inner_fanout = Some(num()?),
                "sorted_slots" => self.sorted_slots = Some(num()?),
                "buffer_threshold" => self.buffer_threshold = Some(num()?),
                "partition_capacity" => self.partition_capacity = num()?,
                "journal_coalesce" => {
                    self.journal_coalesce = value
                        .parse::<bool>()
                        .map_err(|_| format!("bad bool for {key}: {value}"))?
                }
                _ => return Err(format!("unknown config key: {key}")),
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "method={} index={} invalidation={:?} pattern={:?} selectivity={} workload={} scale={} rows={} seed={}",
            self.method.name(),
            self.index.name(),
            self.invalidation,
            self.pattern,
            self.selectivity,
            self.workload.as_deref().unwrap_or("-"),
            self.scale,
            self.rows,
            self.seed
        )
        .unwrap();
        s
    }

    pub fn build_method(&self, dev: &mut SimDevice, dataset: &[Entry]) -> Box<dyn Method> {
        match self.method {
            MethodKind::Am => Box::new(Am::create(
                dev,
                dataset,
                self.partition_capacity,
                self.invalidation,
                self.pool_capacity,
            )),
            MethodKind::Eam => Box::new(Eam::create(
                dev,
                dataset,
                self.partition_capacity,
                self.invalidation,
            )),
            MethodKind::Pam => {
                let pam_cfg = PamConfig {
                    partition_capacity: self.partition_capacity,
                    journal_coalesce: self.journal_coalesce,
                    index: self.index_config(),
                };
                if self.index == IndexKind::Bb {
                    Box::new(Pam::<BbTree>::create(dev, pam_cfg, dataset))
                } else {
                    Box::new(Pam::<PlainTree>::create(dev, pam_cfg, dataset))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config: String,
    pub sim_time_ns: u64,
    pub host_wall_ms: u64,
    pub reads: u64,
    pub line_flushes: u64,
    /// Cumulative modified bits: the wear-out metric.
    pub bits_modified: u64,
    pub invalidation_ns: u64,
    pub queries_to_convergence: u64,
    pub converged: bool,
}

impl ResultRow {
    pub fn csv_header() -> &'static str {
        "config,sim_time_ns,host_wall_ms,reads,line_flushes,bits_modified,invalidation_ns,queries_to_convergence,converged"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.config,
            self.sim_time_ns,
            self.host_wall_ms,
            self.reads,
            self.line_flushes,
            self.bits_modified,
            self.invalidation_ns,
            self.queries_to_convergence,
            self.converged
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("expected 9 fields: {line}"));
        }
        let num = |i: usize| -> Result<u64, String> {
            fields[i].parse().map_err(|_| format!("bad field {i}: {line}"))
        };
        Ok(ResultRow {
            config: fields[0].to_string(),
            sim_time_ns: num(1)?,
            host_wall_ms: num(2)?,
            reads: num(3)?,
            line_flushes: num(4)?,
            bits_modified: num(5)?,
            invalidation_ns: num(6)?,
            queries_to_convergence: num(7)?,
            converged: fields[8].parse().map_err(|_| format!("bad bool: {line}"))?,
        })
    }
}

pub fn emit_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(ResultRow::csv_header());
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ResultRow::csv_header() => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    lines.map(ResultRow::parse_csv_row).collect()
}

fn finish_row(
    cfg: &ExperimentConfig,
    dev: &SimDevice,
    started: Instant,
    invalidation_ns: u64,
    queries: u64,
    converged: bool,
) -> ResultRow {
    let s = dev.stats();
    ResultRow {
        config: cfg.echo(),
        sim_time_ns: s.sim_time_ns,
        host_wall_ms: started.elapsed().as_millis() as u64,
        reads: s.reads,
        line_flushes: s.line_flushes,
        bits_modified: s.bits_modified,
        invalidation_ns,
        queries_to_convergence: queries,
        converged,
    }
}

/// Queries the pattern until every partition is freed, or up to ten times
/// the analytic minimum query count (non-convergence is flagged, not fatal).
pub fn run_convergence(cfg: &ExperimentConfig) -> ResultRow {
    let started = Instant::now();
    let mut dev = SimDevice::new(cfg.device_config());
    let dataset = make_dataset(cfg.rows, cfg.seed);
    let mut method = cfg.build_method(&mut dev, &dataset);
    let mut gen = PatternGen::new(PatternSpec {
        kind: cfg.pattern,
        selectivity: cfg.selectivity,
        domain: cfg.rows,
        seed: cfg.seed ^ 0x9e37_79b9,
    });
    // Sequential advances by half a window per query, hence the factor 2.
    let analytic_min = (2.0 / cfg.selectivity).ceil() as u64;
    let cap = analytic_min * 10;
    let mut queries = 0;
    while !method.converged() && queries < cap {
        match gen.next_query() {
            Some((lo, hi)) => method.search(&mut dev, lo, hi),
            None => break,
        };
        queries += 1;
    }
    finish_row(cfg, &dev, started, method.invalidation_ns(), queries, method.converged())
}

/// Replays `ops` through a method built over the seeded dataset.
pub fn run_trace(cfg: &ExperimentConfig, ops: &[Op]) -> ResultRow {
    let started = Instant::now();
    let mut dcfg = cfg.device_config();
    if cfg.device.capacity_bytes == 0 {
        // Auto-sized capacity must also hold trace inserts, with leaf-level
        // slack for partially filled nodes.
        let inserts = ops.iter().filter(|o| matches!(o, Op::Insert(_))).count();
        dcfg.capacity_bytes += (inserts * 128).div_ceil(64) * 64;
    }
    let mut dev = SimDevice::new(dcfg);
    let dataset = make_dataset(cfg.rows, cfg.seed);
    let mut method = cfg.build_method(&mut dev, &dataset);
    let mut queries = 0;
    for op in ops {
        match *op {
            Op::Insert(e) => method.insert(&mut dev, e),
            Op::Delete(k) => method.delete(&mut dev, k),
            Op::Range(lo, hi) => {
                method.search(&mut dev, lo, hi);
                queries += 1;
            }
            Op::Point(k) => {
                method.point_search(&mut dev, k);
                queries += 1;
            }
        }
    }
    finish_row(cfg, &dev, started, method.invalidation_ns(), queries, method.converged())
}

/// Workload run. The index workloads (write/read/balanced) exercise a bare
/// pre-loaded index; A-D run through the configured merge method.
pub fn run_dynamic(cfg: &ExperimentConfig) -> Result<ResultRow, String> {
    let name = cfg.workload.as_deref().ok_or("run_dynamic needs a workload")?;
    let mut spec = WorkloadSpec::builtin(name).ok_or_else(|| format!("unknown workload: {name}"))?;
    spec.scale = cfg.scale;
    spec.selectivity = cfg.selectivity;
    let ops = make_workload(&spec, cfg.rows, cfg.seed ^ 0x51ed_2701);
    if spec.point {
        Ok(run_index_workload(cfg, &ops))
    } else {
        Ok(run_trace(cfg, &ops))
    }
}

/// Bare main-index comparison: the dataset is bulkloaded up front and the
/// trace runs directly against the index.
pub fn run_index_workload(cfg: &ExperimentConfig, ops: &[Op]) -> ResultRow {
    let started = Instant::now();
    let mut dcfg = cfg.device_config();
    if cfg.device.capacity_bytes == 0 {
        let inserts = ops.iter().filter(|o| matches!(o, Op::Insert(_))).count();
        dcfg.capacity_bytes += (inserts * 128).div_ceil(64) * 64;
    }
    let mut dev = SimDevice::new(dcfg);
    let mut dataset = make_dataset(cfg.rows, cfg.seed);
    dataset.sort();
    let icfg = cfg.index_config();
    let mut queries = 0;
    macro_rules! drive {
        ($index:expr) => {{
            let index = $index;
            index.bulk_insert(&mut dev, &dataset);
            for op in ops {
                match *op {
                    Op::Insert(e) => {
                        index.insert(&mut dev, e);
                    }
                    Op::Delete(k) => {
                        index.delete(&mut dev, k);
                    }
                    Op::Range(lo, hi) => {
                        index.range_search(&mut dev, lo, hi);
                        queries += 1;
                    }
                    Op::Point(k) => {
                        index.point_search(&mut dev, k);
                        queries += 1;
                    }
                }
            }
            index.flush(&mut dev);
        }};
    }
    match cfg.index {
        IndexKind::Bb => drive!(&mut BbTree::create(&mut dev, &icfg)),
        _ => drive!(&mut PlainTree::create(&mut dev, &icfg)),
    }
    finish_row(cfg, &dev, started, 0, queries, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            rows: 2000,
            partition_capacity: 500,
            scale: 1000,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![ResultRow {
            config: "method=pam index=bb".into(),
            sim_time_ns: 12345,
            host_wall_ms: 7,
            reads: 10,
            line_flushes: 20,
            bits_modified: 30,
            invalidation_ns: 5,
            queries_to_convergence: 40,
            converged: true,
        }];
        assert_eq!(parse_csv(&emit_csv(&rows)).unwrap(), rows);
        assert_eq!(emit_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn config_text_applies_and_rejects() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_config_text(
            "read_latency_ns = 70\nbuffer_threshold = 128 # comment\njournal_coalesce = false\n",
        )
        .unwrap();
        assert_eq!(cfg.device.read_latency_ns, 70);
        assert_eq!(cfg.buffer_threshold, Some(128));
        assert!(!cfg.journal_coalesce);
        assert!(cfg.apply_config_text("no_such_key = 1").is_err());
        assert!(cfg.apply_config_text("ranks").is_err());
    }

    #[test]
    fn convergence_is_reproducible_and_converges() {
        let cfg = small_cfg();
        let a = run_convergence(&cfg);
        let b = run_convergence(&cfg);
        assert!(a.converged, "{}", a.csv_row());
        assert_eq!(
            (a.sim_time_ns, a.reads, a.line_flushes, a.bits_modified, a.queries_to_convergence),
            (b.sim_time_ns, b.reads, b.line_flushes, b.bits_modified, b.queries_to_convergence)
        );
    }

    #[test]
    fn new_keys_converges_within_coverage_bound() {
        let cfg = ExperimentConfig {
            pattern: PatternKind::NewKeys,
            ..small_cfg()
        };
        let row = run_convergence(&cfg);
        assert!(row.converged);
        // Disjoint ranges of width 1/selectivity cover the domain in about
        // 1/selectivity queries; allow slack for edge remainders.
        let bound = (1.0 / cfg.selectivity).ceil() as u64 + 5;
        assert!(
            row.queries_to_convergence <= bound,
            "{} > {bound}",
            row.queries_to_convergence
        );
    }

    #[test]
    fn dynamic_workload_runs_all_methods() {
        for method in [MethodKind::Am, MethodKind::Eam, MethodKind::Pam] {
            let cfg = ExperimentConfig {
                method,
                workload: Some("A".into()),
                scale: 1,
                ..small_cfg()
            };
            let row = run_dynamic(&cfg).unwrap();
            assert!(row.sim_time_ns > 0);
        }
        let bad = ExperimentConfig {
            workload: Some("Z".into()),
            ..small_cfg()
        };
        assert!(run_dynamic(&bad).is_err());
    }

    #[test]
    fn index_workload_runs_all_indexes() {
        let mut times = Vec::new();
        for index in [IndexKind::Bb, IndexKind::Sb, IndexKind::Ub] {
            let cfg = ExperimentConfig {
                index,
                workload: Some("read".into()),
                rows: 2000,
                scale: 1000,
                ..ExperimentConfig::default()
            };
            let row = run_dynamic(&cfg).unwrap();
            times.push(row.sim_time_ns);
        }
        assert!(times.iter().all(|&t| t > 0));
    }
}
