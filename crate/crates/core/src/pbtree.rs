//! Partitioned B+tree used by the adaptive-merging baseline.
//!
//! Entries are 24 bytes: key, rid, and the id of the partition the entry was
//! merged from. Leaves hold a sorted, gap-free entry array; every insert or
//! delete shifts the tail of the array and writes the leaf back, so the
//! device charges a flush for each line from the modification point onward.
//! Routing and chain pointers live in DRAM; this baseline has no recovery
//! path.

use crate::device::{Region, SimDevice};
use crate::entry::Entry;

pub const PBT_ENTRY_BYTES: usize = 24;
pub const PBT_LEAF_SLOTS: usize = 20;
const META_BYTES: usize = 64;

/// Partition id for entries inserted directly rather than merged.
pub const FRESH_PID: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PbtEntry {
    pub key: u64,
    pub rid: u64,
    pub pid: u64,
}

impl PbtEntry {
    pub fn entry(&self) -> Entry {
        Entry::new(self.key, self.rid)
    }

    fn encode(&self) -> [u8; PBT_ENTRY_BYTES] {
        let mut out = [0u8; PBT_ENTRY_BYTES];
        out[..8].copy_from_slice(&self.key.to_le_bytes());
        out[8..16].copy_from_slice(&self.rid.to_le_bytes());
        out[16..].copy_from_slice(&self.pid.to_le_bytes());
        out
    }

    fn decode(buf: &[u8]) -> Self {
        PbtEntry {
            key: u64::from_le_bytes(buf[..8].try_into().unwrap()),
            rid: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
            pid: u64::from_le_bytes(buf[16..24].try_into().unwrap()),
        }
    }
}

struct PbtLeaf {
    region: Region,
    count: usize,
    min: u64,
    max: u64,
}

pub struct PbTree {
    leaves: Vec<PbtLeaf>,
    /// Leaf indices in key order; routing runs over DRAM-cached max keys.
    order: Vec<usize>,
    free: Vec<usize>,
    len: usize,
}

impl PbTree {
    pub fn new() -> Self {
        PbTree {
            leaves: Vec::new(),
            order: Vec::new(),
            free: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn leaf_count(&self) -> usize {
        self.order.len()
    }

    fn region_bytes() -> usize {
        META_BYTES + PBT_LEAF_SLOTS * PBT_ENTRY_BYTES
    }

    /// Position in `order` of the leaf whose range contains `key`.
    fn route(&self, key: u64) -> usize {
        let pos = self
            .order
            .partition_point(|&id| self.leaves[id].max < key);
        pos.min(self.order.len() - 1)
    }

    fn load(&self, dev: &mut SimDevice, id: usize) -> Vec<PbtEntry> {
        let leaf = &self.leaves[id];
        if leaf.count == 0 {
            return Vec::new();
        }
        let raw = dev
            .read(&leaf.region, META_BYTES, leaf.count * PBT_ENTRY_BYTES)
            .expect("pbt leaf read");
        raw.chunks(PBT_ENTRY_BYTES).map(PbtEntry::decode).collect()
    }

    /// Writes the full entry array back; the data-comparison write only
    /// flushes the lines the shift actually touched, plus the meta line.
    fn store(&mut self, dev: &mut SimDevice, id: usize, entries: &[PbtEntry]) {
        assert!(entries.len() <= PBT_LEAF_SLOTS);
        let mut buf = vec![0u8; PBT_LEAF_SLOTS * PBT_ENTRY_BYTES];
        for (i, e) in entries.iter().enumerate() {
            buf[i * PBT_ENTRY_BYTES..(i + 1) * PBT_ENTRY_BYTES].copy_from_slice(&e.encode());
        }
        // Stale bytes beyond count are not zeroed; keep them as stored so
        // shrinking writes do not pay for clearing.
        let leaf = &mut self.leaves[id];
        if entries.len() < leaf.count {
            let stale = dev
                .peek(
                    &leaf.region,
                    META_BYTES + entries.len() * PBT_ENTRY_BYTES,
                    (leaf.count - entries.len()) * PBT_ENTRY_BYTES,
                )
                .to_vec();
            buf[entries.len() * PBT_ENTRY_BYTES..leaf.count * PBT_ENTRY_BYTES]
                .copy_from_slice(&stale);
        }
        leaf.count = entries.len();
        leaf.min = entries.first().map(|e| e.key).unwrap_or(0);
        leaf.max = entries.last().map(|e| e.key).unwrap_or(0);
        let mut meta = [0u8; META_BYTES];
        meta[..8].copy_from_slice(&(entries.len() as u64).to_le_bytes());
        let region = self.leaves[id].region;
        dev.write(&region, 0, &meta).expect("pbt meta write");
        dev.write(&region, META_BYTES, &buf).expect("pbt leaf write");
    }

    fn alloc_leaf(&mut self, dev: &mut SimDevice) -> usize {
        let region = dev.alloc(Self::region_bytes()).expect("pbt leaf alloc");
        let leaf = PbtLeaf {
            region,
            count: 0,
            min: 0,
            max: 0,
        };
        if let Some(id) = self.free.pop() {
            self.leaves[id] = leaf;
            id
        } else {
            self.leaves.push(leaf);
            self.leaves.len() - 1
        }
    }

    pub fn insert(&mut self, dev: &mut SimDevice, e: PbtEntry) {
        self.len += 1;
        if self.order.is_empty() {
            let id = self.alloc_leaf(dev);
            self.order.push(id);
            self.store(dev, id, &[e]);
            return;
        }
        let pos = self.route(e.key);
        let id = self.order[pos];
        let mut entries = self.load(dev, id);
        if entries.len() == PBT_LEAF_SLOTS {
            // Split, then insert into the proper half.
            let upper = entries.split_off(entries.len() / 2);
            let new_id = self.alloc_leaf(dev);
            self.order.insert(pos + 1, new_id);
            if e.key <= entries.last().unwrap().key {
                let at = entries.partition_point(|x| x.key <= e.key);
                entries.insert(at, e);
            } else {
                let mut upper = upper;
                let at = upper.partition_point(|x| x.key <= e.key);
                upper.insert(at, e);
                self.store(dev, id, &entries);
                self.store(dev, new_id, &upper);
                return;
            }
            self.store(dev, id, &entries);
            self.store(dev, new_id, &upper);
            return;
        }
        let at = entries.partition_point(|x| x.key <= e.key);
        entries.insert(at, e);
        self.store(dev, id, &entries);
    }

    /// Removes every entry with `key`, shifting leaf tails left. Returns the
    /// number of removed entries.
    pub fn delete(&mut self, dev: &mut SimDevice, key: u64) -> usize {
        if self.order.is_empty() {
            return 0;
        }
        let mut removed = 0;
        let mut pos = self.route(key);
        while pos < self.order.len() {
            let id = self.order[pos];
            if self.leaves[id].count > 0 && self.leaves[id].min > key {
                break;
            }
            let entries = self.load(dev, id);
            let kept: Vec<PbtEntry> = entries.iter().filter(|e| e.key != key).copied().collect();
            if kept.len() != entries.len() {
                removed += entries.len() - kept.len();
                self.store(dev, id, &kept);
            }
            if self.leaves[id].count == 0 && self.order.len() > 1 {
                dev.free(self.leaves[id].region);
                self.free.push(id);
                self.order.remove(pos);
            } else {
                pos += 1;
            }
        }
        self.len -= removed;
        removed
    }

    pub fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Option<PbtEntry> {
        self.range_search(dev, key, key).into_iter().next()
    }

    pub fn range_search(&mut self, dev: &mut SimDevice, lo: u64, hi: u64) -> Vec<PbtEntry> {
        let mut out = Vec::new();
        if self.order.is_empty() {
            return out;
        }
        let mut pos = self.route(lo);
        while pos < self.order.len() {
            let id = self.order[pos];
            if self.leaves[id].count > 0 && self.leaves[id].min > hi {
                break;
            }
            if self.leaves[id].count > 0 && self.leaves[id].max >= lo {
                out.extend(
                    self.load(dev, id)
                        .into_iter()
                        .filter(|e| e.key >= lo && e.key <= hi),
                );
            }
            pos += 1;
        }
        out
    }

    pub fn all_entries(&mut self, dev: &mut SimDevice) -> Vec<PbtEntry> {
        let mut out = Vec::new();
        for pos in 0..self.order.len() {
            let id = self.order[pos];
            out.extend(self.load(dev, id));
        }
        out
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        let mut prev: Option<u64> = None;
        for &id in &self.order {
            let leaf = &self.leaves[id];
            if leaf.count == 0 {
                continue;
            }
            assert!(leaf.min <= leaf.max);
            if let Some(p) = prev {
                assert!(p <= leaf.min, "pbt leaf order violated");
            }
            prev = Some(leaf.max);
        }
        let total: usize = self.order.iter().map(|&id| self.leaves[id].count).sum();
        assert_eq!(total, self.len);
    }
}

impl Default for PbTree {
    fn default() -> Self {
        Self::new()
    }
}
