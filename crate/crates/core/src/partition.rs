//! PCM-resident sorted runs holding the not-yet-merged dataset.
//!
//! The dataset is cut into arrival-order chunks of at most the sorting-buffer
//! capacity; each chunk is sorted in DRAM and written out once as a packed
//! run of 16-byte entries. Runs keep a DRAM key mirror for bookkeeping, but
//! locating a query range inside a run charges binary-search probe reads
//! against the device.

use crate::device::{Region, SimDevice};
use crate::entry::{Entry, ENTRY_BYTES};

#[derive(Debug)]
pub struct SortedRun {
    pub id: usize,
    pub region: Region,
    pub entry_count: usize,
    /// Keys in position order; bookkeeping only.
    pub keys: Vec<u64>,
}

impl SortedRun {
    pub fn min_key(&self) -> u64 {
        *self.keys.first().expect("non-empty run")
    }

    pub fn max_key(&self) -> u64 {
        *self.keys.last().expect("non-empty run")
    }

    /// Builds a run from one sorting-buffer load. Sorting happens in DRAM;
    /// the write of the sorted image is the run's creation cost.
    pub fn build(dev: &mut SimDevice, id: usize, chunk: &[Entry]) -> Self {
        assert!(!chunk.is_empty());
        let mut sorted = chunk.to_vec();
        sorted.sort();
        let region = dev.alloc(sorted.len() * ENTRY_BYTES).expect("run alloc");
        let mut buf = vec![0u8; sorted.len() * ENTRY_BYTES];
        for (i, e) in sorted.iter().enumerate() {
            buf[i * ENTRY_BYTES..(i + 1) * ENTRY_BYTES].copy_from_slice(&e.encode());
        }
        dev.write(&region, 0, &buf).expect("run write");
        SortedRun {
            id,
            region,
            entry_count: sorted.len(),
            keys: sorted.iter().map(|e| e.key).collect(),
        }
    }

    /// Rebuilds the DRAM side of a run from the device (recovery path).
    pub fn reload(dev: &mut SimDevice, id: usize, base: usize, entry_count: usize) -> Self {
        let len = (entry_count * ENTRY_BYTES).div_ceil(64) * 64;
        let region = Region { base, len };
        let raw = dev
            .read(&region, 0, entry_count * ENTRY_BYTES)
            .expect("run read");
        let keys = raw
            .chunks(ENTRY_BYTES)
            .map(|c| Entry::decode(c).key)
            .collect();
        SortedRun {
            id,
            region,
            entry_count,
            keys,
        }
    }

    /// Position range `[start, end)` of keys in `[lo, hi]`, found by binary
    /// search with one charged key read per probe.
    pub fn probe_bounds(&self, dev: &mut SimDevice, lo: u64, hi: u64) -> (usize, usize) {
        let probe = |dev: &mut SimDevice, pos: usize| -> u64 {
            let raw = dev
                .read(&self.region, pos * ENTRY_BYTES, 8)
                .expect("probe read");
            u64::from_le_bytes(raw.try_into().unwrap())
        };
        let search = |dev: &mut SimDevice, pred_ge: u64| -> usize {
            let mut l = 0usize;
            let mut r = self.entry_count;
            while l < r {
                let mid = (l + r) / 2;
                if probe(dev, mid) < pred_ge {
                    l = mid + 1;
                } else {
                    r = mid;
                }
            }
            l
        };
        let start = search(dev, lo);
        let end = match hi.checked_add(1) {
            Some(h) => search(dev, h),
            None => self.entry_count,
        };
        (start, end)
    }

    pub fn read_range(&self, dev: &mut SimDevice, start: usize, end: usize) -> Vec<Entry> {
        if start >= end {
            return Vec::new();
        }
        let raw = dev
            .read(
                &self.region,
                start * ENTRY_BYTES,
                (end - start) * ENTRY_BYTES,
            )
            .expect("run range read");
        raw.chunks(ENTRY_BYTES).map(Entry::decode).collect()
    }

    pub fn free(self, dev: &mut SimDevice) {
        dev.free(self.region);
    }
}

/// Cuts `dataset` (arrival order) into runs of at most `capacity` entries.
pub fn build_runs(dev: &mut SimDevice, dataset: &[Entry], capacity: usize) -> Vec<SortedRun> {
    assert!(capacity > 0);
    dataset
        .chunks(capacity)
        .enumerate()
        .map(|(id, chunk)| SortedRun::build(dev, id, chunk))
        .collect()
}
