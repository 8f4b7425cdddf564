//! B+tree with PCM-resident two-section leaves and DRAM-resident inner nodes.
//!
//! A leaf occupies one meta line (validity bitmap, next-leaf pointer) plus a
//! fixed number of 16-byte entry slots. The leading slots form the sorted
//! section, the trailing slots the unsorted append section. Deletion only
//! clears a bitmap bit; the slot payload is left untouched and becomes a gap
//! that later inserts may fill. With zero sorted slots the same machinery
//! behaves as an unsorted-leaf B+tree; applied per single operation it is a
//! plain sorted-leaf B+tree.
//!
//! Batches are applied through recursive slicing: each inner node splits the
//! batch into half-open key slices per child, and per-entry leaf maintenance
//! (merge when under half occupancy, split when over fanout) runs before
//! each entry lands. Leaf images are read once per batch and written back
//! once; the device diffs images, so co-located modifications share flushes.

use std::collections::HashMap;

use crate::device::{Region, SimDevice};
use crate::entry::{BatchOp, Entry, ENTRY_BYTES};
use crate::inner::{ChildRef, InnerArena, Sep};

pub const LEAF_META_BYTES: usize = 64;
const NO_LEAF: u64 = u64::MAX;

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub sorted_slots: usize,
    pub unsorted_slots: usize,
    /// Maximum valid entries per leaf.
    pub leaf_fanout: usize,
    pub inner_fanout: usize,
}

impl TreeConfig {
    /// Two-section geometry: 24 sorted + 8 unsorted slots.
    pub fn two_section() -> Self {
        TreeConfig {
            sorted_slots: 24,
            unsorted_slots: 8,
            leaf_fanout: 32,
            inner_fanout: 32,
        }
    }

    /// Fully sorted leaves, maintained per operation.
    pub fn sorted_leaf() -> Self {
        Self::two_section()
    }

    /// Fully unsorted leaves.
    pub fn unsorted_leaf() -> Self {
        TreeConfig {
            sorted_slots: 0,
            unsorted_slots: 32,
            leaf_fanout: 32,
            inner_fanout: 32,
        }
    }

    pub fn slots(&self) -> usize {
        self.sorted_slots + self.unsorted_slots
    }

    pub fn region_bytes(&self) -> usize {
        LEAF_META_BYTES + self.slots() * ENTRY_BYTES
    }

    /// Bulkload fill per fresh leaf: ~80% of the fanout, line-aligned when
    /// the leaf is large enough for that to matter.
    pub fn fill_target(&self) -> usize {
        let raw = self.leaf_fanout * 4 / 5;
        if raw >= 4 {
            raw - raw % 4
        } else {
            raw.max(1)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.slots() < 4 || self.slots() > 64 {
            return Err(format!("leaf must have 4..=64 slots, got {}", self.slots()));
        }
        if self.leaf_fanout < 4 || self.leaf_fanout > self.slots() {
            return Err(format!(
                "leaf_fanout {} must be in 4..=slots ({})",
                self.leaf_fanout,
                self.slots()
            ));
        }
        if self.inner_fanout < 2 {
            return Err("inner_fanout must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LeafState {
    region: Region,
    /// DRAM mirror of the persisted validity bitmap, bit i = slot i valid.
    bitmap: u64,
    next: Option<usize>,
    prev: Option<usize>,
    min_key: Option<u64>,
    max_key: Option<u64>,
    live: bool,
}

/// In-DRAM working copy of a leaf's entry section.
struct LeafImg {
    /// Entry-section bytes as loaded; invalid slots keep their stale payload.
    raw: Vec<u8>,
    slots: Vec<Option<Entry>>,
}

impl LeafImg {
    fn from_raw(raw: Vec<u8>, bitmap: u64, n_slots: usize) -> Self {
        let slots = (0..n_slots)
            .map(|i| {
                if bitmap & (1 << i) != 0 {
                    Some(Entry::decode(&raw[i * ENTRY_BYTES..(i + 1) * ENTRY_BYTES]))
                } else {
                    None
                }
            })
            .collect();
        LeafImg { raw, slots }
    }

    fn fresh(cfg: &TreeConfig) -> Self {
        LeafImg {
            raw: vec![0u8; cfg.slots() * ENTRY_BYTES],
            slots: vec![None; cfg.slots()],
        }
    }

    fn valid_count(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    fn bitmap(&self) -> u64 {
        self.slots
            .iter()
            .enumerate()
            .fold(0u64, |b, (i, s)| if s.is_some() { b | (1 << i) } else { b })
    }

    /// Valid entries in key order: sorted section in slot order, unsorted
    /// section merged in.
    fn sorted_valid(&self, cfg: &TreeConfig) -> Vec<Entry> {
        let mut out: Vec<Entry> = self.slots[..cfg.sorted_slots].iter().flatten().copied().collect();
        let mut tail: Vec<Entry> = self.slots[cfg.sorted_slots..].iter().flatten().copied().collect();
        tail.sort();
        if out.is_empty() {
            return tail;
        }
        for e in tail {
            let pos = out.partition_point(|x| x.key <= e.key);
            out.insert(pos, e);
        }
        out
    }

    fn min_max(&self) -> (Option<u64>, Option<u64>) {
        let keys = self.slots.iter().flatten().map(|e| e.key);
        (keys.clone().min(), keys.max())
    }

    fn unsorted_free(&self, cfg: &TreeConfig) -> Option<usize> {
        (cfg.sorted_slots..self.slots.len()).find(|&i| self.slots[i].is_none())
    }

    /// Gap in the sorted section usable without breaking slot-order keys.
    fn sorted_gap(&self, cfg: &TreeConfig, key: u64) -> Option<usize> {
        let mut prev: Option<u64> = None;
        for i in 0..cfg.sorted_slots {
            match self.slots[i] {
                Some(e) => prev = Some(e.key),
                None => {
                    if prev.is_none_or(|p| p <= key) {
                        let next = self.slots[i + 1..cfg.sorted_slots]
                            .iter()
                            .flatten()
                            .next()
                            .map(|e| e.key);
                        if next.is_none_or(|n| key <= n) {
                            return Some(i);
                        }
                    }
                }
            }
        }
        None
    }

    fn set(&mut self, slot: usize, e: Entry) {
        self.slots[slot] = Some(e);
    }

    /// Clears the validity bit of every copy of `key`; payloads stay.
    fn delete_key(&mut self, key: u64) -> usize {
        let mut n = 0;
        for s in self.slots.iter_mut() {
            if s.map(|e| e.key) == Some(key) {
                *s = None;
                n += 1;
            }
        }
        n
    }

    /// Rewrites the leaf to hold exactly `entries`, sorted section first.
    fn compact(&mut self, cfg: &TreeConfig, entries: &[Entry]) {
        assert!(entries.len() <= self.slots.len());
        self.slots.fill(None);
        for (i, e) in entries.iter().enumerate() {
            let slot = if i < cfg.sorted_slots {
                i
            } else {
                i // spills into the unsorted section in key order
            };
            self.slots[slot] = Some(*e);
        }
    }
}

/// Split point near the middle that avoids separating equal keys when
/// possible.
fn choose_split(entries: &[Entry]) -> usize {
    let n = entries.len();
    assert!(n >= 2);
    let mid = n / 2;
    (1..n)
        .filter(|&i| entries[i - 1].key < entries[i].key)
        .min_by_key(|&i| i.abs_diff(mid))
        .unwrap_or(mid)
}

pub struct SectionedTree {
    cfg: TreeConfig,
    inner: InnerArena,
    leaves: Vec<LeafState>,
    free_leaves: Vec<usize>,
    header: Region,
    head: Option<usize>,
}

impl SectionedTree {
    pub fn create(dev: &mut SimDevice, cfg: TreeConfig) -> Self {
        cfg.validate().expect("invalid tree config");
        let header = dev.alloc(LEAF_META_BYTES).expect("header alloc");
        let tree = SectionedTree {
            inner: InnerArena::new(cfg.inner_fanout),
            leaves: Vec::new(),
            free_leaves: Vec::new(),
            header,
            head: None,
            cfg,
        };
        tree.persist_header(dev);
        tree
    }

    pub fn config(&self) -> &TreeConfig {
        &self.cfg
    }

    pub fn header_region(&self) -> Region {
        self.header
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.iter().filter(|l| l.live).count()
    }

    fn persist_header(&self, dev: &mut SimDevice) {
        let base = self
            .head
            .map(|h| self.leaves[h].region.base as u64)
            .unwrap_or(NO_LEAF);
        dev.write(&self.header, 0, &base.to_le_bytes()).expect("header write");
    }

    fn write_meta(&self, dev: &mut SimDevice, leaf: usize) {
        let st = &self.leaves[leaf];
        let mut meta = [0u8; LEAF_META_BYTES];
        meta[..8].copy_from_slice(&st.bitmap.to_le_bytes());
        let next = st
            .next
            .map(|n| self.leaves[n].region.base as u64)
            .unwrap_or(NO_LEAF);
        meta[8..16].copy_from_slice(&next.to_le_bytes());
        dev.write(&st.region, 0, &meta).expect("meta write");
    }

    fn load_img(&self, dev: &mut SimDevice, leaf: usize) -> LeafImg {
        let st = &self.leaves[leaf];
        let raw = dev
            .read(&st.region, LEAF_META_BYTES, self.cfg.slots() * ENTRY_BYTES)
            .expect("leaf read");
        LeafImg::from_raw(raw, st.bitmap, self.cfg.slots())
    }

    fn write_back(&mut self, dev: &mut SimDevice, leaf: usize, img: &LeafImg) {
        let (min, max) = img.min_max();
        {
            let st = &mut self.leaves[leaf];
            st.bitmap = img.bitmap();
            st.min_key = min;
            st.max_key = max;
        }
        self.write_meta(dev, leaf);
        let mut buf = img.raw.clone();
        for (i, s) in img.slots.iter().enumerate() {
            if let Some(e) = s {
                buf[i * ENTRY_BYTES..(i + 1) * ENTRY_BYTES].copy_from_slice(&e.encode());
            }
        }
        let region = self.leaves[leaf].region;
        dev.write(&region, LEAF_META_BYTES, &buf).expect("leaf write");
    }

    fn alloc_leaf(&mut self, dev: &mut SimDevice) -> usize {
        let region = dev.alloc(self.cfg.region_bytes()).expect("leaf alloc");
        let st = LeafState {
            region,
            bitmap: 0,
            next: None,
            prev: None,
            min_key: None,
            max_key: None,
            live: true,
        };
        if let Some(id) = self.free_leaves.pop() {
            self.leaves[id] = st;
            id
        } else {
            self.leaves.push(st);
            self.leaves.len() - 1
        }
    }

    fn has_sibling(&self, leaf: usize) -> bool {
        self.inner.siblings_of_leaf(leaf).len() > 1
    }

    /// Persists a neighbor's meta line now unless a pending image write will.
    fn persist_meta_unless_open(
        &self,
        dev: &mut SimDevice,
        open: &HashMap<usize, LeafImg>,
        leaf: usize,
    ) {
        if !open.contains_key(&leaf) {
            self.write_meta(dev, leaf);
        }
    }

    /// Splits `n` around the median; the lower half moves to a fresh leaf
    /// whose separator is appended to the parent's unsorted part. Returns
    /// (lower, upper, separator key).
    fn split_leaf(
        &mut self,
        dev: &mut SimDevice,
        open: &mut HashMap<usize, LeafImg>,
        n: usize,
    ) -> (usize, usize, u64) {
        let entries = open[&n].sorted_valid(&self.cfg);
        let mid = choose_split(&entries);
        let (lower_e, upper_e) = entries.split_at(mid);
        let mid_key = lower_e.last().expect("non-empty lower half").key;

        let lower = self.alloc_leaf(dev);
        let mut lower_img = LeafImg::fresh(&self.cfg);
        lower_img.compact(&self.cfg, lower_e);
        open.get_mut(&n).unwrap().compact(&self.cfg, upper_e);

        // Chain: prev(n) -> lower -> n.
        let prev = self.leaves[n].prev;
        self.leaves[lower].prev = prev;
        self.leaves[lower].next = Some(n);
        self.leaves[n].prev = Some(lower);
        match prev {
            Some(p) => {
                self.leaves[p].next = Some(lower);
                self.persist_meta_unless_open(dev, open, p);
            }
            None => {
                self.head = Some(lower);
                self.persist_header(dev);
            }
        }
        open.insert(lower, lower_img);

        let parent = self.inner.leaf_parent(n);
        self.inner.insert_pair(parent, Some(mid_key), ChildRef::Leaf(lower));
        (lower, n, mid_key)
    }

    /// Merges underfull `n` with a same-parent neighbor (right preferred).
    /// Either unions into the survivor or redistributes around the median.
    /// Returns the leaf that now owns `n`'s key range.
    fn merge_leaf(
        &mut self,
        dev: &mut SimDevice,
        open: &mut HashMap<usize, LeafImg>,
        n: usize,
    ) -> usize {
        let pairs = self.inner.siblings_of_leaf(n);
        let pos = pairs
            .iter()
            .position(|&(_, c)| c == ChildRef::Leaf(n))
            .expect("leaf under parent");
        let (sib, sib_is_right) = if pos + 1 < pairs.len() {
            (pairs[pos + 1].1, true)
        } else {
            (pairs[pos - 1].1, false)
        };
        let ChildRef::Leaf(sib_id) = sib else {
            unreachable!("leaf neighbors are leaves")
        };
        if !open.contains_key(&sib_id) {
            let img = self.load_img(dev, sib_id);
            open.insert(sib_id, img);
        }

        let (l, r) = if sib_is_right { (n, sib_id) } else { (sib_id, n) };
        let mut combined = open[&l].sorted_valid(&self.cfg);
        combined.extend(open[&r].sorted_valid(&self.cfg));

        if combined.len() <= self.cfg.leaf_fanout {
            // Union into the right node; the left node's pair and region go.
            let (survivor, victim) = (r, l);
            open.get_mut(&survivor).unwrap().compact(&self.cfg, &combined);
            debug_assert_eq!(self.leaves[survivor].prev, Some(victim));
            let vprev = self.leaves[victim].prev;
            self.leaves[survivor].prev = vprev;
            match vprev {
                Some(p) => {
                    self.leaves[p].next = Some(survivor);
                    self.persist_meta_unless_open(dev, open, p);
                }
                None => {
                    self.head = Some(survivor);
                    self.persist_header(dev);
                }
            }
            self.inner.remove_leaf_pair(victim);
            open.remove(&victim);
            dev.free(self.leaves[victim].region);
            self.leaves[victim].live = false;
            self.free_leaves.push(victim);
            survivor
        } else {
            // Redistribute around the median; the left separator moves.
            let l_now = open[&l].valid_count();
            let mut mid = choose_split(&combined);
            if mid == l_now {
                // The equal-key-friendly split reproduced the current
                // boundary; force progress even if it separates duplicates.
                mid = combined.len() / 2;
            }
            let (lower_e, upper_e) = combined.split_at(mid);
            open.get_mut(&l).unwrap().compact(&self.cfg, lower_e);
            open.get_mut(&r).unwrap().compact(&self.cfg, upper_e);
            self.inner.set_leaf_sep(l, Some(lower_e.last().unwrap().key));
            n
        }
    }

    /// Applies a sorted batch with per-entry merge/split pre-checks and
    /// post-batch normalization. Each op descends the (DRAM-free) routing
    /// layer; since ops are sorted, consecutive ops hit the same leaf and the
    /// descent degenerates to the recursive key-slice walk. Leaf images are
    /// read and written once per batch.
    fn apply_batch(&mut self, dev: &mut SimDevice, ops: &[BatchOp]) {
        let mut open: HashMap<usize, LeafImg> = HashMap::new();
        for op in ops {
            let mut n = self.inner.route(op.entry.key).expect("tree has leaves");
            if !open.contains_key(&n) {
                let img = self.load_img(dev, n);
                open.insert(n, img);
            }
            let mut guard = 0;
            loop {
                guard += 1;
                assert!(guard < 1000, "leaf maintenance stuck on leaf {n}, key {}", op.entry.key);
                let vc = open[&n].valid_count();
                if vc > self.cfg.leaf_fanout {
                    self.split_leaf(dev, &mut open, n);
                } else if vc < self.cfg.leaf_fanout / 2 && self.has_sibling(n) {
                    self.merge_leaf(dev, &mut open, n);
                } else {
                    break;
                }
                // Splits and redistributions move the key-space boundary.
                n = self.inner.route(op.entry.key).expect("tree has leaves");
                debug_assert!(open.contains_key(&n));
            }
            if op.tombstone {
                open.get_mut(&n).unwrap().delete_key(op.entry.key);
            } else {
                self.place(dev, &mut open, &mut n, op.entry);
            }
        }
        // Post-batch normalization of every touched leaf.
        for _ in 0..64 {
            let mut ids: Vec<usize> = open.keys().copied().collect();
            ids.sort_unstable();
            let mut changed = false;
            for id in ids {
                if !open.contains_key(&id) || !self.leaves[id].live {
                    continue;
                }
                let vc = open[&id].valid_count();
                if vc > self.cfg.leaf_fanout {
                    self.split_leaf(dev, &mut open, id);
                    changed = true;
                } else if vc < self.cfg.leaf_fanout / 2 && self.has_sibling(id) {
                    self.merge_leaf(dev, &mut open, id);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut ids: Vec<usize> = open.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            let img = &open[&id];
            if self.leaves[id].live {
                self.write_back(dev, id, img);
            }
        }
    }

    fn place(
        &mut self,
        dev: &mut SimDevice,
        open: &mut HashMap<usize, LeafImg>,
        n: &mut usize,
        e: Entry,
    ) {
        let mut guard = 0;
        loop {
            guard += 1;
            assert!(guard < 1000, "placement stuck on leaf {n}, key {}", e.key);
            let img = open.get_mut(n).unwrap();
            // Order-compatible gaps in the sorted section are reused first.
            if let Some(slot) = img.sorted_gap(&self.cfg, e.key) {
                img.set(slot, e);
                return;
            }
            if let Some(slot) = img.unsorted_free(&self.cfg) {
                img.set(slot, e);
                return;
            }
            let (lower, _, mid) = self.split_leaf(dev, open, *n);
            if e.key <= mid {
                *n = lower;
            }
        }
    }

    /// Bulkload (possibly mixed with tombstones), sorted by key. On an empty
    /// tree this builds leaves at the bulkload fill factor; otherwise the
    /// batch is sliced recursively along inner-node separators.
    pub fn bulkload(&mut self, dev: &mut SimDevice, ops: &[BatchOp]) {
        if ops.is_empty() {
            return;
        }
        let mut ops = ops.to_vec();
        // Key order; a tombstone precedes an insert of the same key.
        ops.sort_by_key(|o| (o.entry.key, !o.tombstone, o.entry.rid));
        if self.inner.is_empty() {
            let entries: Vec<Entry> = ops.iter().filter(|o| !o.tombstone).map(|o| o.entry).collect();
            if !entries.is_empty() {
                self.initial_build(dev, &entries);
            }
            return;
        }
        self.apply_batch(dev, &ops);
        self.inner.collapse_root();
    }

    fn initial_build(&mut self, dev: &mut SimDevice, entries: &[Entry]) {
        let fill = self.cfg.fill_target();
        let n_leaves = entries.len().div_ceil(fill);
        let base = entries.len() / n_leaves;
        let rem = entries.len() % n_leaves;
        let mut chunks: Vec<&[Entry]> = Vec::with_capacity(n_leaves);
        let mut i = 0usize;
        let mut k = 0usize;
        while i < entries.len() {
            let size = if k + rem >= n_leaves { base + 1 } else { base };
            let mut b = (i + size).min(entries.len());
            // Keep runs of one key inside one leaf where capacity allows.
            while b < entries.len() && entries[b].key == entries[b - 1].key && b - i < self.cfg.slots() {
                b += 1;
            }
            chunks.push(&entries[i..b]);
            i = b;
            k += 1;
        }
        let mut ids = Vec::with_capacity(chunks.len());
        for _ in 0..chunks.len() {
            let id = self.alloc_leaf(dev);
            ids.push(id);
        }
        for (pos, &id) in ids.iter().enumerate() {
            self.leaves[id].prev = if pos > 0 { Some(ids[pos - 1]) } else { None };
            self.leaves[id].next = ids.get(pos + 1).copied();
        }
        self.head = Some(ids[0]);
        let mut pairs: Vec<(Sep, usize)> = Vec::with_capacity(ids.len());
        for (pos, (&id, chunk)) in ids.iter().zip(&chunks).enumerate() {
            let sep = if pos + 1 == ids.len() {
                None
            } else {
                Some(chunk.last().unwrap().key)
            };
            pairs.push((sep, id));
        }
        self.inner.bulk_build(&pairs);
        for (&id, chunk) in ids.iter().zip(&chunks) {
            let mut img = LeafImg::fresh(&self.cfg);
            img.compact(&self.cfg, chunk);
            self.write_back(dev, id, &img);
        }
        self.persist_header(dev);
    }

    pub fn insert_one(&mut self, dev: &mut SimDevice, e: Entry) {
        self.bulkload(dev, &[BatchOp::insert(e)]);
    }

    pub fn delete_one(&mut self, dev: &mut SimDevice, key: u64) {
        if self.inner.is_empty() {
            return;
        }
        self.bulkload(dev, &[BatchOp::tombstone(key)]);
    }

    /// First valid entry with `key` in leaf order, walking the chain past
    /// duplicate spill-overs.
    pub fn point_search(&mut self, dev: &mut SimDevice, key: u64) -> Option<Entry> {
        let mut leaf = self.inner.route(key)?;
        loop {
            if let Some(e) = self.search_leaf(dev, leaf, key) {
                return Some(e);
            }
            match self.leaves[leaf].next {
                Some(nx) => match self.leaves[nx].min_key {
                    Some(m) if m > key => return None,
                    _ => leaf = nx,
                },
                None => return None,
            }
        }
    }

    fn search_leaf(&self, dev: &mut SimDevice, leaf: usize, key: u64) -> Option<Entry> {
        let st = &self.leaves[leaf];
        if st.bitmap == 0 {
            return None;
        }
        match (st.min_key, st.max_key) {
            (Some(lo), Some(hi)) if key < lo || key > hi => return None,
            _ => {}
        }
        let region = st.region;
        let mut lines: HashMap<usize, Vec<u8>> = HashMap::new();
        let mut entry_at = |dev: &mut SimDevice, slot: usize| -> Entry {
            let li = slot * ENTRY_BYTES / 64;
            let line = lines.entry(li).or_insert_with(|| {
                dev.read(&region, LEAF_META_BYTES + li * 64, 64).expect("line read")
            });
            let off = slot * ENTRY_BYTES - li * 64;
            Entry::decode(&line[off..off + ENTRY_BYTES])
        };
        // Binary search over the valid slots of the sorted section.
        let valid_sorted: Vec<usize> = (0..self.cfg.sorted_slots)
            .filter(|&i| st.bitmap & (1 << i) != 0)
            .collect();
        if !valid_sorted.is_empty() {
            let mut lo = 0usize;
            let mut hi = valid_sorted.len();
            while lo < hi {
                let mid = (lo + hi) / 2;
                if entry_at(dev, valid_sorted[mid]).key < key {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            if lo < valid_sorted.len() {
                let e = entry_at(dev, valid_sorted[lo]);
                if e.key == key {
                    return Some(e);
                }
            }
        }
        // Linear scan of the unsorted section, first match in slot order.
        for slot in self.cfg.sorted_slots..self.cfg.slots() {
            if st.bitmap & (1 << slot) != 0 {
                let e = entry_at(dev, slot);
                if e.key == key {
                    return Some(e);
                }
            }
        }
        None
    }

    /// All valid entries with `lo <= key <= hi`, sorted by key; duplicates
    /// are all reported.
    pub fn range_search(&mut self, dev: &mut SimDevice, lo: u64, hi: u64) -> Vec<Entry> {
        let mut out = Vec::new();
        let Some(mut leaf) = self.inner.route(lo) else {
            return out;
        };
        loop {
            let st = &self.leaves[leaf];
            if matches!(st.min_key, Some(m) if m > hi) {
                break;
            }
            let overlaps = st.bitmap != 0
                && st.max_key.is_some_and(|mx| mx >= lo)
                && st.min_key.is_some_and(|mn| mn <= hi);
            if overlaps {
                let img = self.load_img(dev, leaf);
                out.extend(
                    img.slots
                        .iter()
                        .flatten()
                        .filter(|e| e.key >= lo && e.key <= hi),
                );
            }
            match self.leaves[leaf].next {
                Some(nx) => leaf = nx,
                None => break,
            }
        }
        out.sort();
        out
    }

    /// Every valid entry, in key order. Charged like a full scan.
    pub fn all_entries(&mut self, dev: &mut SimDevice) -> Vec<Entry> {
        let mut out = Vec::new();
        let mut cur = self.head;
        while let Some(leaf) = cur {
            let img = self.load_img(dev, leaf);
            out.extend(img.sorted_valid(&self.cfg));
            cur = self.leaves[leaf].next;
        }
        out
    }

    /// Rebuilds the DRAM side (inner nodes, mirrors) from device contents,
    /// starting at the persisted header.
    pub fn recover(dev: &mut SimDevice, cfg: TreeConfig, header: Region) -> Self {
        cfg.validate().expect("invalid tree config");
        let head_bytes = dev.read(&header, 0, 8).expect("header read");
        let mut next_base = u64::from_le_bytes(head_bytes.try_into().unwrap());
        let mut tree = SectionedTree {
            inner: InnerArena::new(cfg.inner_fanout),
            leaves: Vec::new(),
            free_leaves: Vec::new(),
            header,
            head: None,
            cfg,
        };
        let mut pairs: Vec<(Sep, usize)> = Vec::new();
        let mut last_sep = 0u64;
        while next_base != NO_LEAF {
            let region = Region {
                base: next_base as usize,
                len: cfg.region_bytes(),
            };
            let meta = dev.read(&region, 0, 16).expect("meta read");
            let bitmap = u64::from_le_bytes(meta[..8].try_into().unwrap());
            let nb = u64::from_le_bytes(meta[8..16].try_into().unwrap());
            let raw = dev
                .read(&region, LEAF_META_BYTES, cfg.slots() * ENTRY_BYTES)
                .expect("leaf read");
            let img = LeafImg::from_raw(raw, bitmap, cfg.slots());
            let (min, max) = img.min_max();
            let id = tree.leaves.len();
            tree.leaves.push(LeafState {
                region,
                bitmap,
                next: None,
                prev: if id > 0 { Some(id - 1) } else { None },
                min_key: min,
                max_key: max,
                live: true,
            });
            if id > 0 {
                tree.leaves[id - 1].next = Some(id);
            }
            // Empty leaves inherit the running separator; they route nothing
            // but stay on the chain.
            last_sep = max.unwrap_or(last_sep).max(last_sep);
            pairs.push((Some(last_sep), id));
            next_base = nb;
        }
        if let Some(last) = pairs.last_mut() {
            last.0 = None;
            tree.head = Some(0);
        }
        tree.inner.bulk_build(&pairs);
        tree
    }

    /// One line per leaf in chain order, for debugging.
    pub fn dump(&mut self, dev: &mut SimDevice) -> String {
        let mut out = String::new();
        let mut cur = self.head;
        while let Some(leaf) = cur {
            let img = self.load_img(dev, leaf);
            let fmt = |range: std::ops::Range<usize>| {
                range
                    .filter_map(|i| img.slots[i].map(|e| format!("{}:{}", e.key, e.rid)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let invalid: Vec<String> = (0..self.cfg.slots())
                .filter(|&i| img.slots[i].is_none())
                .map(|i| i.to_string())
                .collect();
            out.push_str(&format!(
                "leaf {} sorted=[{}] unsorted=[{}] invalid=[{}]\n",
                leaf,
                fmt(0..self.cfg.sorted_slots),
                fmt(self.cfg.sorted_slots..self.cfg.slots()),
                invalid.join(", ")
            ));
            cur = self.leaves[leaf].next;
        }
        out
    }

    /// Structural invariants, checked against device contents (uncharged).
    pub fn check_invariants(&self, dev: &SimDevice) {
        let mut cur = self.head;
        let mut prev_max: Option<u64> = None;
        let mut seen = 0usize;
        let live = self.leaf_count();
        while let Some(leaf) = cur {
            seen += 1;
            let st = &self.leaves[leaf];
            assert!(st.live, "dead leaf on chain");
            let raw = dev.peek(&st.region, 0, self.cfg.region_bytes());
            let bitmap = u64::from_le_bytes(raw[..8].try_into().unwrap());
            assert_eq!(bitmap, st.bitmap, "bitmap mirror out of sync");
            let img = LeafImg::from_raw(raw[LEAF_META_BYTES..].to_vec(), bitmap, self.cfg.slots());
            let vc = img.valid_count();
            assert!(vc <= self.cfg.leaf_fanout, "leaf over fanout");
            if self.has_sibling(leaf) {
                assert!(vc >= self.cfg.leaf_fanout / 2, "leaf under half occupancy");
            }
            // Sorted section keys non-decreasing in slot order.
            let sorted_keys: Vec<u64> = img.slots[..self.cfg.sorted_slots]
                .iter()
                .flatten()
                .map(|e| e.key)
                .collect();
            assert!(sorted_keys.windows(2).all(|w| w[0] <= w[1]), "sorted section disordered");
            let (min, max) = img.min_max();
            assert_eq!((min, max), (st.min_key, st.max_key), "min/max mirror out of sync");
            if let (Some(pm), Some(mn)) = (prev_max, min) {
                assert!(pm <= mn, "leaf chain key order violated");
            }
            prev_max = max.or(prev_max);
            cur = st.next;
        }
        assert_eq!(seen, live, "chain misses live leaves");
        let routed = self.inner.leaves_in_order();
        assert_eq!(routed.len(), live, "routing misses leaves");
    }
}
