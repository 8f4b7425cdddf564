//! Common interface over the main-index variants used by the merge methods.

use crate::device::{Region, SimDevice};
use crate::entry::{BatchOp, Entry};
use crate::sectioned::{SectionedTree, TreeConfig};

#[derive(Debug, Clone, Copy)]
pub struct IndexConfig {
    pub tree: TreeConfig,
    /// Buffer-tree flush threshold in buffered keys; ignored by unbuffered
    /// indexes.
    pub buffer_threshold: usize,
}

impl IndexConfig {
    /// Buffer tree over two-section leaves.
    pub fn bb() -> Self {
        IndexConfig {
            tree: TreeConfig::two_section(),
            buffer_threshold: 4096,
        }
    }

    /// Two-section leaves, maintained per operation.
    pub fn sb() -> Self {
        IndexConfig {
            tree: TreeConfig::sorted_leaf(),
            buffer_threshold: 0,
        }
    }

    /// Unsorted leaves, maintained per operation.
    pub fn ub() -> Self {
        IndexConfig {
            tree: TreeConfig::unsorted_leaf(),
            buffer_threshold: 0,
        }
    }
}

/// A key-rid index a merge method materializes entries into. `insert` and
/// `delete` report whether the operation triggered a buffer flush, so callers
/// journaling buffered state know when it reached the device.
pub trait MergeIndex: Sized {
    fn create(dev: &mut SimDevice, cfg: &IndexConfig) -> Self;

    /// Rebuilds the DRAM side from the device after a crash. Buffered state
    /// is gone; callers replay it from their own journals.
    fn recover(dev: &mut SimDevice, cfg: &IndexConfig, header: Region) -> Self;

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) -> bool;

    fn delete(&mut self, dev: &mut SimDevice, key: u64) -> bool;

    /// Bulk path for merged partition entries; bypasses any buffer.
    fn bulk_insert(&mut self, dev: &mut SimDevice, entries: &[Entry]);

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Option<Entry>;

    fn range_search(&mut self, dev: &mut SimDevice, lo: u64, hi: u64) -> Vec<Entry>;

    fn flush(&mut self, dev: &mut SimDevice);

    fn is_buffered(&self) -> bool {
        false
    }

    fn buffered_ops(&self) -> usize {
        0
    }

    /// Main-index-resident entries in key order; buffered ops not included.
    fn all_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry>;

    fn header_region(&self) -> Region;

    fn leaf_count(&self) -> usize;

    fn dump(&mut self, dev: &mut SimDevice) -> String;
}

/// Unbuffered index: every operation runs as a single-element batch.
pub struct PlainTree {
    tree: SectionedTree,
}

impl MergeIndex for PlainTree {
    fn create(dev: &mut SimDevice, cfg: &IndexConfig) -> Self {
        PlainTree {
            tree: SectionedTree::create(dev, cfg.tree),
        }
    }

    fn recover(dev: &mut SimDevice, cfg: &IndexConfig, header: Region) -> Self {
        PlainTree {
            tree: SectionedTree::recover(dev, cfg.tree, header),
        }
    }

    fn insert(&mut self, dev: &mut SimDevice, e: Entry) -> bool {
        self.tree.insert_one(dev, e);
        false
    }

    fn delete(&mut self, dev: &mut SimDevice, key: u64) -> bool {
        self.tree.delete_one(dev, key);
        false
    }

    fn bulk_insert(&mut self, dev: &mut SimDevice, entries: &[Entry]) {
        let ops: Vec<BatchOp> = entries.iter().map(|&e| BatchOp::insert(e)).collect();
        self.tree.bulkload(dev, &ops);
    }

    fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Option<Entry> {
        self.tree.point_search(dev, key)
    }

    fn range_search(&mut self, dev: &mut SimDevice, lo: u64, hi: u64) -> Vec<Entry> {
        self.tree.range_search(dev, lo, hi)
    }

    fn flush(&mut self, _dev: &mut SimDevice) {}

    fn all_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        self.tree.all_entries(dev)
    }

    fn header_region(&self) -> Region {
        self.tree.header_region()
    }

    fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }

    fn dump(&mut self, dev: &mut SimDevice) -> String {
        self.tree.dump(dev)
    }
}

impl PlainTree {
    pub fn check_invariants(&self, dev: &SimDevice) {
        self.tree.check_invariants(dev);
    }
}
