//! Seeded generators for query patterns, operation workloads, and trace I/O.
//!
//! Keys are dense integers `0..rows`, so key distance equals row count and a
//! query of selectivity `s` spans exactly `floor(rows * s)` key units.

use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entry::Entry;
use crate::interval::RangeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Random,
    Sequential,
    NewKeys,
}

impl PatternKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(PatternKind::Random),
            "sequential" => Some(PatternKind::Sequential),
            "newkeys" => Some(PatternKind::NewKeys),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Fraction of the table fetched per query, in (0, 1].
    pub selectivity: f64,
    /// Keys live in `0..domain`.
    pub domain: u64,
    pub seed: u64,
}

impl PatternSpec {
    /// Query width in key units: `floor(domain * selectivity)`, at least 1.
    pub fn rows(&self) -> u64 {
        ((self.domain as f64 * self.selectivity) as u64).max(1)
    }
}

/// Deterministic query-range stream for one pattern. `next_query` yields
/// closed ranges; `None` means the pattern is exhausted (new-keys only).
pub struct PatternGen {
    spec: PatternSpec,
    rng: ChaCha8Rng,
    seq_start: Option<u64>,
    emitted: RangeSet,
}

impl PatternGen {
    pub fn new(spec: PatternSpec) -> Self {
        assert!(spec.selectivity > 0.0 && spec.selectivity <= 1.0);
        assert!(spec.domain > 0);
        PatternGen {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            seq_start: None,
            emitted: RangeSet::new(),
        }
    }

    pub fn next_query(&mut self) -> Option<(u64, u64)> {
        let rows = self.spec.rows();
        let max_key = self.spec.domain - 1;
        match self.spec.kind {
            PatternKind::Random => {
                // Uniform over all windows overlapping the domain, so edge
                // keys are as likely to be covered as interior ones.
                let r = self.rng.gen_range(0..self.spec.domain + rows);
                let min = r.saturating_sub(rows);
                Some((min.min(max_key), (min + rows).min(max_key)))
            }
            PatternKind::Sequential => {
                // Restart in the first 0.01% of the domain whenever the
                // shifted window would run off the end, so rounds never
                // repeat the same start sequence.
                let window = (self.spec.domain / 10_000).max(1);
                let start = match self.seq_start {
                    Some(s) if s + rows <= max_key => s,
                    _ => self.rng.gen_range(0..window),
                };
                self.seq_start = Some(start + rows / 2);
                Some((start, (start + rows).min(max_key)))
            }
            PatternKind::NewKeys => {
                // Ranges are pairwise disjoint: carve the next query out of
                // a random remaining gap.
                let gaps = self.emitted.gaps(0, max_key);
                if gaps.is_empty() {
                    return None;
                }
                let (glo, ghi) = gaps[self.rng.gen_range(0..gaps.len())];
                let hi = (glo + rows).min(ghi);
                self.emitted.insert(glo, hi);
                Some((glo, hi))
            }
        }
    }
}

/// Table rows in random arrival order; rid is derived from the key so every
/// method sees identical payloads.
pub fn make_dataset(rows: u64, seed: u64) -> Vec<Entry> {
    let mut data: Vec<Entry> = (0..rows).map(|k| Entry::new(k, k + 1)).collect();
    data.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    data
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert(Entry),
    Delete(u64),
    Range(u64, u64),
    Point(u64),
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub name: String,
    pub batches: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub searches: usize,
    /// Point searches when true, range searches otherwise.
    pub point: bool,
    pub selectivity: f64,
    /// Divisor applied to all per-batch counts; nonzero counts floor to 1.
    pub scale: usize,
}

impl WorkloadSpec {
    pub fn builtin(name: &str) -> Option<Self> {
        let (batches, inserts, deletes, searches, point) = match name {
            "write" => (10, 40_000, 40_000, 20_000, true),
            "read" => (10, 10_000, 10_000, 80_000, true),
            "balanced" => (10, 25_000, 25_000, 50_000, true),
            "A" => (100, 5, 5, 10, false),
            "B" => (5, 100_000, 100_000, 5, false),
            "C" => (10, 100_000_000, 100_000, 20, false),
            "D" => (10, 10_000_000, 10_000, 10, false),
            _ => return None,
        };
        Some(WorkloadSpec {
            name: name.to_string(),
            batches,
            inserts,
            deletes,
            searches,
            point,
            selectivity: 0.05,
            scale: 1,
        })
    }

    fn scaled(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            (n / self.scale.max(1)).max(1)
        }
    }

    pub fn scaled_counts(&self) -> (usize, usize, usize) {
        (
            self.scaled(self.inserts),
            self.scaled(self.deletes),
            self.scaled(self.searches),
        )
    }
}

/// Expands a workload over a `0..domain` key table into a deterministic
/// operation trace. Within a batch the three op kinds are interleaved
/// proportionally (least-progress-first round robin), so every method
/// replays byte-identical traces.
pub fn make_workload(spec: &WorkloadSpec, domain: u64, seed: u64) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ins, del, srch) = spec.scaled_counts();
    let rows = ((domain as f64 * spec.selectivity) as u64).max(1);
    let mut live: Vec<u64> = (0..domain).collect();
    let mut next_fresh = domain;
    let mut trace = Vec::with_capacity(spec.batches * (ins + del + srch));
    for _ in 0..spec.batches {
        let quota = [ins, del, srch];
        let mut done = [0usize; 3];
        let total: usize = quota.iter().sum();
        for _ in 0..total {
            // Pick the kind furthest behind its quota fraction.
            let kind = (0..3)
                .filter(|&k| done[k] < quota[k])
                .min_by(|&a, &b| {
                    let fa = done[a] as f64 / quota[a] as f64;
                    let fb = done[b] as f64 / quota[b] as f64;
                    fa.partial_cmp(&fb).unwrap()
                })
                .unwrap();
            done[kind] += 1;
            match kind {
                0 => {
                    let key = next_fresh;
                    next_fresh += 1;
                    live.push(key);
                    trace.push(Op::Insert(Entry::new(key, key + 1)));
                }
                1 => {
                    if live.is_empty() {
                        continue;
                    }
                    let i = rng.gen_range(0..live.len());
                    trace.push(Op::Delete(live.swap_remove(i)));
                }
                _ => {
                    if spec.point {
                        trace.push(Op::Point(rng.gen_range(0..next_fresh)));
                    } else {
                        let min = rng.gen_range(0..domain);
                        trace.push(Op::Range(min, (min + rows).min(next_fresh - 1)));
                    }
                }
            }
        }
    }
    trace
}

pub fn write_trace<W: Write>(ops: &[Op], w: &mut W) -> io::Result<()> {
    for op in ops {
        match op {
            Op::Insert(e) => writeln!(w, "INS {} {}", e.key, e.rid)?,
            Op::Delete(k) => writeln!(w, "DEL {k}")?,
            Op::Range(lo, hi) => writeln!(w, "RQ {lo} {hi}")?,
            Op::Point(k) => writeln!(w, "PQ {k}")?,
        }
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> io::Result<Vec<Op>> {
    let bad = |line: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad trace line: {line}"));
    let mut ops = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().ok_or_else(|| bad(line))?;
        let num = |line: &str, it: &mut std::str::SplitWhitespace| -> io::Result<u64> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(line))
        };
        ops.push(match tag {
            "INS" => Op::Insert(Entry::new(num(line, &mut it)?, num(line, &mut it)?)),
            "DEL" => Op::Delete(num(line, &mut it)?),
            "RQ" => Op::Range(num(line, &mut it)?, num(line, &mut it)?),
            "PQ" => Op::Point(num(line, &mut it)?),
            _ => return Err(bad(line)),
        });
        if it.next().is_some() {
            return Err(bad(line));
        }
    }
    Ok(ops)
}
