//! Buffer tree in front of the two-section main index.
//!
//! Modifications land in a DRAM buffer keyed by key; insert and delete of
//! the same key coalesce, so at most one net operation per key survives to
//! the flush. A flush drains the whole buffer as one bulkload batch, which
//! lets co-located leaf modifications share line flushes. Searches overlay
//! the buffer: a buffered delete hides main-index copies, a buffered insert
//! overrides them.

use std::collections::BTreeMap;

use crate::device::{Region, SimDevice};
use crate::entry::{BatchOp, Entry};
use crate::index::{IndexConfig, MergeIndex};
use crate::sectioned::SectionedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Buffered {
    Ins(u64),
    Del,
    /// Delete of a main-resident key followed by a re-insert.
    DelIns(u64),
}

pub struct BbTree {
    main: SectionedTree,
    buf: BTreeMap<u64, Buffered>,
    threshold: usize,
}

impl BbTree {
    fn put_insert(&mut self, key: u64, rid: u64) {
        let next = match self.buf.get(&key) {
            None | Some(Buffered::Ins(_)) => Buffered::Ins(rid),
            Some(Buffered::Del) | Some(Buffered::DelIns(_)) => Buffered::DelIns(rid),
        };
        self.buf.insert(key, next);
    }

    fn put_delete(&mut self, key: u64) {
        self.buf.insert(key, Buffered::Del);
    }

    fn flush_if_over_threshold(&mut self, dev: &mut SimDevice) -> bool {
        if self.buf.len() > self.threshold {
            self.flush(dev);
            true
        } else {
            false
        }
    }

    pub fn check_invariants(&self, dev: &SimDevice) {
        self.main.check_invariants(dev);
    }
}

impl MergeIndex for BbTree {
    fn create(dev: &mut SimDevice, cfg: &IndexConfig) -> Self {
        assert!(cfg.buffer_threshold > 0, "buffer tree needs a flush threshold");
        BbTree {
            main: SectionedTree::create(dev, cfg.tree),
            buf: BTreeMap::new(),
            threshold: cfg.buffer_threshold,
        }
    }

    fn recover(dev: &mut SimDevice, cfg: &IndexConfig, header: Region) -> Self {
        BbTree {
            main: SectionedTree::recover(dev, cfg.tree, header),
            buf: BTreeMap::new(),
            threshold: cfg.buffer_threshold.max(1),
        }
    }

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) -> bool {
        self.put_insert(e.key, e.rid);
        self.flush_if_over_threshold(dev)
    }

    fn delete(&mut self, dev: &mut SimDevice, key: u64) -> bool {
        self.put_delete(key);
        self.flush_if_over_threshold(dev)
    }

    fn bulk_insert(&mut self, dev: &mut SimDevice, entries: &[Entry]) {
        let ops: Vec<BatchOp> = entries.iter().map(|&e| BatchOp::insert(e)).collect();
        self.main.bulkload(dev, &ops);
    }

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Option<Entry> {
        match self.buf.get(&key) {
            Some(Buffered::Ins(rid)) | Some(Buffered::DelIns(rid)) => Some(Entry::new(key, *rid)),
            Some(Buffered::Del) => None,
            None => self.main.point_search(dev, key),
        }
    }

    fn range_search(&mut self, dev: &mut SimDevice, lo: u64, hi: u64) -> Vec<Entry> {
        let mut out = self.main.range_search(dev, lo, hi);
        for (&key, b) in self.buf.range(lo..=hi) {
            out.retain(|e| e.key != key);
            if let Buffered::Ins(rid) | Buffered::DelIns(rid) = b {
                out.push(Entry::new(key, *rid));
            }
        }
        out.sort();
        out
    }

    /// Drains the buffer into one bulkload batch. Every buffered key emits a
    /// tombstone first, making the flush an upsert that matches the overlay
    /// semantics of searches; a tombstone for an absent key costs nothing.
    fn flush(&mut self, dev: &mut SimDevice) {
        if self.buf.is_empty() {
            return;
        }
        let mut ops = Vec::with_capacity(self.buf.len() * 2);
        for (&key, &b) in &self.buf {
            ops.push(BatchOp::tombstone(key));
            if let Buffered::Ins(rid) | Buffered::DelIns(rid) = b {
                ops.push(BatchOp::insert(Entry::new(key, rid)));
            }
        }
        self.buf.clear();
        self.main.bulkload(dev, &ops);
    }

    fn is_buffered(&self) -> bool {
        true
    }

    fn buffered_ops(&self) -> usize {
        self.buf.len()
    }

    fn all_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        self.main.all_entries(dev)
    }

    fn header_region(&self) -> Region {
        self.main.header_region()
    }

    fn leaf_count(&self) -> usize {
        self.main.leaf_count()
    }

    fn dump(&mut self, dev: &mut SimDevice) -> String {
        self.main.dump(dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;
    use crate::index::PlainTree;
    use crate::sectioned::TreeConfig;

    fn device() -> SimDevice {
        SimDevice::new(DeviceConfig::with_capacity(1 << 22))
    }

    fn toy_cfg() -> IndexConfig {
        IndexConfig {
            tree: TreeConfig {
                sorted_slots: 4,
                unsorted_slots: 4,
                leaf_fanout: 4,
                inner_fanout: 8,
            },
            buffer_threshold: 16,
        }
    }

    fn e(key: u64) -> Entry {
        Entry::new(key, key * 10)
    }

    #[test]
    fn buffered_flush_walkthrough() {
        let mut dev = device();
        let mut bb = BbTree::create(&mut dev, &toy_cfg());
        bb.bulk_insert(&mut dev, &[e(1), e(3), e(5), e(7), e(9), e(11), e(13)]);
        // Leaves: {1,3} {5,7} {9,11,13}.
        assert_eq!(bb.leaf_count(), 3);
        bb.insert(&mut dev, e(6));
        bb.insert(&mut dev, e(8));
        bb.delete(&mut dev, 3);
        bb.delete(&mut dev, 13);
        // Nothing reached the device yet; searches already see the ops.
        assert_eq!(bb.buffered_ops(), 4);
        assert_eq!(bb.point_search(&mut dev, 6), Some(e(6)));
        assert!(bb.point_search(&mut dev, 3).is_none());
        bb.flush(&mut dev);
        assert_eq!(bb.buffered_ops(), 0);
        let keys: Vec<u64> = bb.all_entries(&mut dev).iter().map(|x| x.key).collect();
        assert_eq!(keys, vec![1, 5, 6, 7, 8, 9, 11]);
        // The first two leaves merged; 13's slot is invalid, payload intact.
        assert_eq!(bb.leaf_count(), 2);
        let dump = bb.dump(&mut dev);
        assert!(dump.lines().any(|l| l.contains("invalid=") && l.contains("9:90")), "{dump}");
        bb.check_invariants(&dev);
    }

    #[test]
    fn insert_then_delete_coalesces_to_nothing() {
        let mut dev = device();
        let mut bb = BbTree::create(&mut dev, &toy_cfg());
        bb.bulk_insert(&mut dev, &[e(10), e(20), e(30), e(40), e(50)]);
        let flushes = dev.stats().line_flushes;
        bb.insert(&mut dev, e(25));
        bb.delete(&mut dev, 25);
        assert_eq!(bb.buffered_ops(), 1); // one net tombstone
        bb.flush(&mut dev);
        // The tombstone finds nothing; the leaf image is unchanged, so the
        // data-comparison write elides every line.
        assert_eq!(dev.stats().line_flushes, flushes);
        assert!(bb.point_search(&mut dev, 25).is_none());
    }

    #[test]
    fn delete_then_reinsert_survives_flush() {
        let mut dev = device();
        let mut bb = BbTree::create(&mut dev, &toy_cfg());
        bb.bulk_insert(&mut dev, &[e(10), e(20), e(30), e(40), e(50)]);
        bb.delete(&mut dev, 20);
        bb.insert(&mut dev, Entry::new(20, 999));
        assert_eq!(bb.point_search(&mut dev, 20), Some(Entry::new(20, 999)));
        bb.flush(&mut dev);
        assert_eq!(bb.point_search(&mut dev, 20), Some(Entry::new(20, 999)));
    }

    #[test]
    fn auto_flush_at_threshold() {
        let mut dev = device();
        let mut cfg = toy_cfg();
        cfg.buffer_threshold = 4;
        let mut bb = BbTree::create(&mut dev, &cfg);
        bb.bulk_insert(&mut dev, &[e(100), e(200), e(300), e(400), e(500)]);
        let mut flushed = false;
        for k in [110u64, 120, 130, 140, 150] {
            flushed |= bb.insert(&mut dev, e(k));
        }
        assert!(flushed, "fifth buffered key must trip the threshold");
        assert_eq!(bb.buffered_ops(), 0);
        assert_eq!(
            bb.range_search(&mut dev, 100, 200).iter().map(|x| x.key).collect::<Vec<_>>(),
            vec![100, 110, 120, 130, 140, 150, 200]
        );
    }

    #[test]
    fn range_overlay_hides_and_adds() {
        let mut dev = device();
        let mut bb = BbTree::create(&mut dev, &toy_cfg());
        bb.bulk_insert(&mut dev, &[e(10), e(20), e(30), e(40), e(50)]);
        bb.delete(&mut dev, 30);
        bb.insert(&mut dev, Entry::new(35, 1));
        bb.insert(&mut dev, Entry::new(20, 2)); // overrides the main copy
        let got: Vec<(u64, u64)> = bb
            .range_search(&mut dev, 15, 45)
            .iter()
            .map(|x| (x.key, x.rid))
            .collect();
        assert_eq!(got, vec![(20, 2), (35, 1), (40, 400)]);
    }

    #[test]
    fn batching_beats_per_op_maintenance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut dev_bb = device();
        let mut dev_sb = device();
        let mut bb = BbTree::create(&mut dev_bb, &IndexConfig::bb());
        let mut sb = PlainTree::create(&mut dev_sb, &IndexConfig::sb());
        let initial: Vec<Entry> = (0..3000u64).map(|k| e(k * 4)).collect();
        bb.bulk_insert(&mut dev_bb, &initial);
        sb.bulk_insert(&mut dev_sb, &initial);
        let (f_bb0, f_sb0) = (dev_bb.stats().line_flushes, dev_sb.stats().line_flushes);
        for _ in 0..6000 {
            let k = rng.gen_range(0..12000u64);
            if rng.gen_bool(0.5) {
                bb.insert(&mut dev_bb, Entry::new(k, 1));
                sb.insert(&mut dev_sb, Entry::new(k, 1));
            } else {
                bb.delete(&mut dev_bb, k);
                sb.delete(&mut dev_sb, k);
            }
        }
        bb.flush(&mut dev_bb);
        let bb_flushes = dev_bb.stats().line_flushes - f_bb0;
        let sb_flushes = dev_sb.stats().line_flushes - f_sb0;
        assert!(
            bb_flushes < sb_flushes,
            "buffered batching should flush fewer lines: {bb_flushes} vs {sb_flushes}"
        );
    }

    #[test]
    fn recover_drops_buffer_keeps_main() {
        let mut dev = device();
        let cfg = toy_cfg();
        let mut bb = BbTree::create(&mut dev, &cfg);
        bb.bulk_insert(&mut dev, &[e(10), e(20), e(30), e(40), e(50)]);
        bb.insert(&mut dev, e(25));
        bb.flush(&mut dev);
        bb.insert(&mut dev, e(26)); // stays buffered, lost at crash
        let header = bb.header_region();
        drop(bb);
        let mut rec = BbTree::recover(&mut dev, &cfg, header);
        assert_eq!(rec.point_search(&mut dev, 25), Some(e(25)));
        assert!(rec.point_search(&mut dev, 26).is_none());
        assert_eq!(rec.buffered_ops(), 0);
    }
}
