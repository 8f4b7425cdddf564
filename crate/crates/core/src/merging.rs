//! Adaptive-merging baseline methods.
//!
//! AM keeps a partitioned B+tree over the partitions and merges query ranges
//! entry by entry; deletions are postponed in a DRAM memory pool until it
//! fills. eAM swaps the partitioned B+tree for an unsorted-leaf tree with
//! validity bitmaps so merges append and deletes flip single bits. Both mark
//! merged partition copies invalid with a configurable strategy; the
//! strategies differ only in write cost, never in visibility.

use crate::device::{Region, SimDevice, WriteReceipt};
use crate::entry::Entry;
use crate::index::{IndexConfig, MergeIndex, PlainTree};
use crate::interval::RangeSet;
use crate::pam::Pam;
use crate::partition::{build_runs, SortedRun};
use crate::pbtree::{PbTree, PbtEntry, FRESH_PID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidationStrategy {
    /// One byte per entry set false, next to the partition.
    Flag,
    /// One bit per partition entry, DRAM-mirrored.
    Bitmap,
    /// DRAM range journal; no partition-side writes at all.
    Journal,
}

impl InvalidationStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "flag" => Some(InvalidationStrategy::Flag),
            "bitmap" => Some(InvalidationStrategy::Bitmap),
            "journal" => Some(InvalidationStrategy::Journal),
            _ => None,
        }
    }
}

/// Bounded DRAM pool of keys pending index deletion (AM's late
/// materialization).
pub struct MemoryPool {
    keys: Vec<u64>,
    capacity: usize,
}

impl MemoryPool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        MemoryPool {
            keys: Vec::new(),
            capacity,
        }
    }

    pub fn contains(&self, key: u64) -> bool {
        self.keys.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.keys.len() >= self.capacity
    }

    fn push(&mut self, key: u64) {
        self.keys.push(key);
    }

    fn remove(&mut self, key: u64) -> bool {
        let before = self.keys.len();
        self.keys.retain(|&k| k != key);
        before != self.keys.len()
    }

    fn drain(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.keys)
    }
}

/// A sorted run plus per-entry validity. `merged` is the DRAM truth used for
/// visibility; the chosen strategy decides what the device is charged.
pub struct MethodPartition {
    pub run: SortedRun,
    merged: Vec<bool>,
    live: usize,
    aux: Option<Region>,
    bitmap_mirror: Vec<u64>,
    freed: bool,
}

impl MethodPartition {
    pub fn new(dev: &mut SimDevice, run: SortedRun, strategy: InvalidationStrategy) -> Self {
        let n = run.entry_count;
        let (aux, mirror_words) = match strategy {
            InvalidationStrategy::Flag => (Some(dev.alloc(n).expect("flag alloc")), 0),
            InvalidationStrategy::Bitmap => {
                (Some(dev.alloc(n.div_ceil(8)).expect("bitmap alloc")), n.div_ceil(64))
            }
            InvalidationStrategy::Journal => (None, 0),
        };
        MethodPartition {
            run,
            merged: vec![false; n],
            live: n,
            aux,
            bitmap_mirror: vec![0; mirror_words],
            freed: false,
        }
    }

    pub fn live(&self) -> usize {
        self.live
    }

    /// Marks `positions` invalid and charges the strategy's write cost.
    /// Positions must be live. Returns the aggregate write receipt; the
    /// journal strategy records key ranges in `journal` for free.
    pub fn invalidate(
        &mut self,
        dev: &mut SimDevice,
        strategy: InvalidationStrategy,
        positions: &[usize],
        journal: &mut RangeSet,
    ) -> WriteReceipt {
        let mut total = WriteReceipt::default();
        if positions.is_empty() {
            return total;
        }
        for &p in positions {
            assert!(!self.merged[p], "position {p} already invalid");
            self.merged[p] = true;
        }
        self.live -= positions.len();
        match strategy {
            InvalidationStrategy::Flag => {
                let aux = self.aux.unwrap();
                // One byte per position; contiguous runs share a write.
                let mut i = 0;
                while i < positions.len() {
                    let start = positions[i];
                    let mut end = start + 1;
                    while i + 1 < positions.len() && positions[i + 1] == end {
                        end += 1;
                        i += 1;
                    }
                    let r = dev
                        .write(&aux, start, &vec![1u8; end - start])
                        .expect("flag write");
                    total.add(&r);
                    i += 1;
                }
            }
            InvalidationStrategy::Bitmap => {
                let aux = self.aux.unwrap();
                for &p in positions {
                    self.bitmap_mirror[p / 64] |= 1 << (p % 64);
                }
                let mut buf = vec![0u8; self.bitmap_mirror.len() * 8];
                for (w, v) in self.bitmap_mirror.iter().enumerate() {
                    buf[w * 8..w * 8 + 8].copy_from_slice(&v.to_le_bytes());
                }
                // Rewrite the whole mirror; only dirty lines are charged.
                let r = dev.write(&aux, 0, &buf[..aux.len.min(buf.len())]).expect("bitmap write");
                total.add(&r);
            }
            InvalidationStrategy::Journal => {
                for &p in positions {
                    let k = self.run.keys[p];
                    journal.insert(k, k);
                }
            }
        }
        total
    }

    /// Live positions of `key` in this partition.
    fn positions_of(&self, key: u64) -> Vec<usize> {
        let lo = self.run.keys.partition_point(|&k| k < key);
        let hi = self.run.keys.partition_point(|&k| k <= key);
        (lo..hi).filter(|&p| !self.merged[p]).collect()
    }

    fn free(&mut self, dev: &mut SimDevice) {
        self.freed = true;
        dev.free(self.run.region);
        if let Some(aux) = self.aux.take() {
            dev.free(aux);
        }
    }
}

fn make_partitions(
    dev: &mut SimDevice,
    dataset: &[Entry],
    capacity: usize,
    strategy: InvalidationStrategy,
) -> Vec<MethodPartition> {
    build_runs(dev, dataset, capacity)
        .into_iter()
        .map(|run| MethodPartition::new(dev, run, strategy))
        .collect()
}

/// One interface over AM, eAM and PAM for the benchmark harness.
pub trait Method {
    fn search(&mut self, dev: &mut SimDevice, k1: u64, k2: u64) -> Vec<Entry>;
    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Vec<Entry>;
    fn insert(&mut self, dev: &mut SimDevice, e: Entry);
    fn delete(&mut self, dev: &mut SimDevice, key: u64);
    fn partitions_remaining(&self) -> usize;
    fn converged(&self) -> bool {
        self.partitions_remaining() == 0
    }
    /// Simulated time spent invalidating partition copies.
    fn invalidation_ns(&self) -> u64;
    /// Everything currently visible, without merging side effects.
    fn live_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry>;
}

/// Classic adaptive merging: partitioned B+tree index, per-entry merges,
/// deletions postponed in a memory pool.
pub struct Am {
    pub index: PbTree,
    pub pool: MemoryPool,
    strategy: InvalidationStrategy,
    parts: Vec<MethodPartition>,
    journal: RangeSet,
    invalidation_ns: u64,
}

impl Am {
    pub fn create(
        dev: &mut SimDevice,
        dataset: &[Entry],
        partition_capacity: usize,
        strategy: InvalidationStrategy,
        pool_capacity: usize,
    ) -> Self {
        Am {
            index: PbTree::new(),
            pool: MemoryPool::new(pool_capacity),
            parts: make_partitions(dev, dataset, partition_capacity, strategy),
            strategy,
            journal: RangeSet::new(),
            invalidation_ns: 0,
        }
    }

    fn drain_pool(&mut self, dev: &mut SimDevice) {
        for key in self.pool.drain() {
            self.index.delete(dev, key);
        }
    }

    fn invalidate_copies(&mut self, dev: &mut SimDevice, key: u64) {
        let t0 = dev.sim_time_ns();
        for i in 0..self.parts.len() {
            if self.parts[i].freed {
                continue;
            }
            let positions = self.parts[i].positions_of(key);
            self.parts[i].invalidate(dev, self.strategy, &positions, &mut self.journal);
            if self.parts[i].live == 0 {
                self.parts[i].free(dev);
            }
        }
        self.invalidation_ns += dev.sim_time_ns() - t0;
    }
}

impl Method for Am {
    fn search(&mut self, dev: &mut SimDevice, k1: u64, k2: u64) -> Vec<Entry> {
        assert!(k1 <= k2);
        let mut result: Vec<Entry> = self
            .index
            .range_search(dev, k1, k2)
            .into_iter()
            .filter(|e| !self.pool.contains(e.key))
            .map(|e| e.entry())
            .collect();
        for i in 0..self.parts.len() {
            if self.parts[i].freed || self.parts[i].live == 0 {
                continue;
            }
            if self.parts[i].run.min_key() > k2 || self.parts[i].run.max_key() < k1 {
                continue;
            }
            let (s, e) = self.parts[i].run.probe_bounds(dev, k1, k2);
            if s == e {
                continue;
            }
            let entries = self.parts[i].run.read_range(dev, s, e);
            let mut fresh_pos = Vec::new();
            let mut fresh = Vec::new();
            for (off, en) in entries.into_iter().enumerate() {
                if !self.parts[i].merged[s + off] {
                    fresh_pos.push(s + off);
                    fresh.push(en);
                }
            }
            // Entry-at-a-time merge into the partitioned B+tree; this is
            // AM's cost disadvantage.
            for en in &fresh {
                self.index.insert(
                    dev,
                    PbtEntry {
                        key: en.key,
                        rid: en.rid,
                        pid: i as u64,
                    },
                );
            }
            let t0 = dev.sim_time_ns();
            self.parts[i].invalidate(dev, self.strategy, &fresh_pos, &mut self.journal);
            if self.parts[i].live == 0 {
                self.parts[i].free(dev);
            }
            self.invalidation_ns += dev.sim_time_ns() - t0;
            result.extend(fresh);
        }
        result.sort();
        result
    }

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Vec<Entry> {
        self.search(dev, key, key)
    }

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) {
        // A pending pool deletion of the same key must land first, or the
        // eventual drain would kill the fresh entry.
        if self.pool.remove(e.key) {
            self.index.delete(dev, e.key);
        }
        self.index.insert(
            dev,
            PbtEntry {
                key: e.key,
                rid: e.rid,
                pid: FRESH_PID,
            },
        );
    }

    fn delete(&mut self, dev: &mut SimDevice, key: u64) {
        self.invalidate_copies(dev, key);
        self.pool.push(key);
        if self.pool.is_full() {
            self.drain_pool(dev);
        }
    }

    fn partitions_remaining(&self) -> usize {
        self.parts.iter().filter(|p| !p.freed).count()
    }

    fn invalidation_ns(&self) -> u64 {
        self.invalidation_ns
    }

    fn live_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        let mut out: Vec<Entry> = self
            .index
            .all_entries(dev)
            .into_iter()
            .filter(|e| !self.pool.contains(e.key))
            .map(|e| e.entry())
            .collect();
        for p in &self.parts {
            if p.freed {
                continue;
            }
            let entries = p.run.read_range(dev, 0, p.run.entry_count);
            out.extend(
                entries
                    .into_iter()
                    .enumerate()
                    .filter(|(pos, _)| !p.merged[*pos])
                    .map(|(_, e)| e),
            );
        }
        out.sort();
        out
    }
}

/// Evolved adaptive merging: UB+tree index (append-only leaves, bit-flip
/// deletes), batched merges, bitmap invalidation by default.
pub struct Eam {
    pub index: PlainTree,
    strategy: InvalidationStrategy,
    parts: Vec<MethodPartition>,
    journal: RangeSet,
    invalidation_ns: u64,
}

impl Eam {
    pub fn create(
        dev: &mut SimDevice,
        dataset: &[Entry],
        partition_capacity: usize,
        strategy: InvalidationStrategy,
    ) -> Self {
        Eam {
            index: PlainTree::create(dev, &IndexConfig::ub()),
            parts: make_partitions(dev, dataset, partition_capacity, strategy),
            strategy,
            journal: RangeSet::new(),
            invalidation_ns: 0,
        }
    }
}

impl Method for Eam {
    fn search(&mut self, dev: &mut SimDevice, k1: u64, k2: u64) -> Vec<Entry> {
        assert!(k1 <= k2);
        let mut result = self.index.range_search(dev, k1, k2);
        let mut to_insert = Vec::new();
        for i in 0..self.parts.len() {
            if self.parts[i].freed || self.parts[i].live == 0 {
                continue;
            }
            if self.parts[i].run.min_key() > k2 || self.parts[i].run.max_key() < k1 {
                continue;
            }
            let (s, e) = self.parts[i].run.probe_bounds(dev, k1, k2);
            if s == e {
                continue;
            }
            let entries = self.parts[i].run.read_range(dev, s, e);
            let mut fresh_pos = Vec::new();
            let mut fresh = Vec::new();
            for (off, en) in entries.into_iter().enumerate() {
                if !self.parts[i].merged[s + off] {
                    fresh_pos.push(s + off);
                    fresh.push(en);
                }
            }
            let t0 = dev.sim_time_ns();
            self.parts[i].invalidate(dev, self.strategy, &fresh_pos, &mut self.journal);
            if self.parts[i].live == 0 {
                self.parts[i].free(dev);
            }
            self.invalidation_ns += dev.sim_time_ns() - t0;
            to_insert.extend(fresh);
        }
        if !to_insert.is_empty() {
            to_insert.sort();
            result.extend(to_insert.iter().copied());
            self.index.bulk_insert(dev, &to_insert);
        }
        result.sort();
        result
    }

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Vec<Entry> {
        self.search(dev, key, key)
    }

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) {
        self.index.insert(dev, e);
    }

    fn delete(&mut self, dev: &mut SimDevice, key: u64) {
        let t0 = dev.sim_time_ns();
        for i in 0..self.parts.len() {
            if self.parts[i].freed {
                continue;
            }
            let positions = self.parts[i].positions_of(key);
            self.parts[i].invalidate(dev, self.strategy, &positions, &mut self.journal);
            if self.parts[i].live == 0 {
                self.parts[i].free(dev);
            }
        }
        self.invalidation_ns += dev.sim_time_ns() - t0;
        self.index.delete(dev, key);
    }

    fn partitions_remaining(&self) -> usize {
        self.parts.iter().filter(|p| !p.freed).count()
    }

    fn invalidation_ns(&self) -> u64 {
        self.invalidation_ns
    }

    fn live_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        let mut out = self.index.all_entries(dev);
        for p in &self.parts {
            if p.freed {
                continue;
            }
            let entries = p.run.read_range(dev, 0, p.run.entry_count);
            out.extend(
                entries
                    .into_iter()
                    .enumerate()
                    .filter(|(pos, _)| !p.merged[*pos])
                    .map(|(_, e)| e),
            );
        }
        out.sort();
        out
    }
}

impl<I: MergeIndex> Method for Pam<I> {
    fn search(&mut self, dev: &mut SimDevice, k1: u64, k2: u64) -> Vec<Entry> {
        Pam::search(self, dev, k1, k2)
    }

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Vec<Entry> {
        Pam::point_search(self, dev, key)
    }

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) {
        Pam::insert(self, dev, e);
    }

    fn delete(&mut self, dev: &mut SimDevice, key: u64) {
        Pam::delete(self, dev, key);
    }

    fn partitions_remaining(&self) -> usize {
        Pam::partitions_remaining(self)
    }

    fn invalidation_ns(&self) -> u64 {
        Pam::invalidation_ns(self)
    }

    fn live_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        Pam::live_entries(self, dev)
    }
}
