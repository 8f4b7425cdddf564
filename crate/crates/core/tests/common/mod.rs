#![allow(dead_code)]
//! Shared helpers for the integration suites: trace generation, a sorted-map
//! shadow oracle, and method construction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pamsim::bbtree::BbTree;
use pamsim::device::{DeviceConfig, SimDevice};
use pamsim::entry::Entry;
use pamsim::index::{IndexConfig, PlainTree};
use pamsim::merging::{Am, Eam, InvalidationStrategy, Method};
use pamsim::pam::{Pam, PamConfig};
use pamsim::workload::{make_dataset, Op};

pub const DOMAIN: u64 = 10_000;
pub const PARTITION_CAPACITY: usize = 2_000;

pub fn device() -> SimDevice {
    SimDevice::new(DeviceConfig::with_capacity(1 << 25))
}

/// Randomized mixed trace: range/point searches, fresh-key inserts, and
/// deletes of currently live keys, over the dense `0..DOMAIN` table.
pub fn gen_trace(seed: u64, n_ops: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<u64> = (0..DOMAIN).collect();
    let mut next_fresh = DOMAIN;
    let mut ops = Vec::with_capacity(n_ops);
    for _ in 0..n_ops {
        match rng.gen_range(0..100) {
            0..=39 => {
                let lo = rng.gen_range(0..next_fresh);
                let width = rng.gen_range(1..=500);
                ops.push(Op::Range(lo, (lo + width).min(next_fresh - 1)));
            }
            40..=49 => ops.push(Op::Point(rng.gen_range(0..next_fresh))),
            50..=74 => {
                let key = next_fresh;
                next_fresh += 1;
                live.push(key);
                ops.push(Op::Insert(Entry::new(key, key * 7 + 1)));
            }
            _ => {
                if live.is_empty() {
                    continue;
                }
                let i = rng.gen_range(0..live.len());
                ops.push(Op::Delete(live.swap_remove(i)));
            }
        }
    }
    ops
}

/// The ground truth: a sorted map replaying the same trace.
pub struct Oracle {
    map: BTreeMap<u64, u64>,
}

impl Oracle {
    pub fn new(dataset: &[Entry]) -> Self {
        Oracle {
            map: dataset.iter().map(|e| (e.key, e.rid)).collect(),
        }
    }

    pub fn insert(&mut self, e: Entry) {
        self.map.insert(e.key, e.rid);
    }

    pub fn delete(&mut self, key: u64) {
        self.map.remove(&key);
    }

    pub fn range(&self, lo: u64, hi: u64) -> Vec<Entry> {
        self.map
            .range(lo..=hi)
            .map(|(&k, &r)| Entry::new(k, r))
            .collect()
    }

    pub fn all(&self) -> Vec<Entry> {
        self.range(0, u64::MAX)
    }
}

pub const METHOD_NAMES: [&str; 5] = ["am", "eam", "pam+bb", "pam+sb", "pam+ub"];

pub fn build_method(name: &str, dev: &mut SimDevice, dataset: &[Entry]) -> Box<dyn Method> {
    let pam_cfg = |index: IndexConfig| PamConfig {
        partition_capacity: PARTITION_CAPACITY,
        journal_coalesce: true,
        index,
    };
    match name {
        "am" => Box::new(Am::create(
            dev,
            dataset,
            PARTITION_CAPACITY,
            InvalidationStrategy::Flag,
            256,
        )),
        "eam" => Box::new(Eam::create(
            dev,
            dataset,
            PARTITION_CAPACITY,
            InvalidationStrategy::Bitmap,
        )),
        "pam+bb" => Box::new(Pam::<BbTree>::create(dev, pam_cfg(IndexConfig::bb()), dataset)),
        "pam+sb" => Box::new(Pam::<PlainTree>::create(dev, pam_cfg(IndexConfig::sb()), dataset)),
        "pam+ub" => Box::new(Pam::<PlainTree>::create(dev, pam_cfg(IndexConfig::ub()), dataset)),
        _ => panic!("unknown method {name}"),
    }
}

/// Replays `ops` against the method, checking every search result against
/// the oracle. Returns the number of checked queries.
pub fn replay_checked(
    name: &str,
    dev: &mut SimDevice,
    method: &mut dyn Method,
    oracle: &mut Oracle,
    ops: &[Op],
) -> usize {
    let mut checked = 0;
    for (i, op) in ops.iter().enumerate() {
        match *op {
            Op::Insert(e) => {
                method.insert(dev, e);
                oracle.insert(e);
            }
            Op::Delete(k) => {
                method.delete(dev, k);
                oracle.delete(k);
            }
            Op::Range(lo, hi) => {
                let got = method.search(dev, lo, hi);
                let want = oracle.range(lo, hi);
                assert_eq!(got, want, "{name}: range [{lo},{hi}] mismatch at op {i}");
                checked += 1;
            }
            Op::Point(k) => {
                let got = method.point_search(dev, k);
                let want = oracle.range(k, k);
                assert_eq!(got, want, "{name}: point {k} mismatch at op {i}");
                checked += 1;
            }
        }
    }
    checked
}

pub fn dataset() -> Vec<Entry> {
    make_dataset(DOMAIN, 0xda7a)
}
