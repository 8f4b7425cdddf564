//! Ordered set of closed `u64` key ranges with eager coalescing.
//!
//! Backs the insertion journal and the new-keys query pattern. Adjacent and
//! overlapping ranges merge on insert, so stored ranges are always pairwise
//! disjoint and non-adjacent.

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RangeSet {
    /// Sorted, disjoint, non-adjacent closed intervals.
    ranges: Vec<(u64, u64)>,
}

impl RangeSet {
    pub fn new() -> Self {
        RangeSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn insert(&mut self, mut lo: u64, mut hi: u64) {
        assert!(lo <= hi);
        let idx = self.ranges.partition_point(|&(_, e)| e.checked_add(1) < Some(lo));
        while idx < self.ranges.len() {
            let (s, e) = self.ranges[idx];
            if hi.checked_add(1) < Some(s) {
                break;
            }
            lo = lo.min(s);
            hi = hi.max(e);
            self.ranges.remove(idx);
        }
        self.ranges.insert(idx, (lo, hi));
    }

    pub fn covers(&self, key: u64) -> bool {
        let idx = self.ranges.partition_point(|&(s, _)| s <= key);
        idx > 0 && self.ranges[idx - 1].1 >= key
    }

    pub fn covers_range(&self, lo: u64, hi: u64) -> bool {
        let idx = self.ranges.partition_point(|&(s, _)| s <= lo);
        idx > 0 && self.ranges[idx - 1].1 >= hi
    }

    /// Subranges of `[lo, hi]` not covered by the set, in order.
    pub fn gaps(&self, lo: u64, hi: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        let start = self.ranges.partition_point(|&(_, e)| e < lo);
        for &(s, e) in &self.ranges[start..] {
            if s > hi {
                break;
            }
            if s > cursor {
                out.push((cursor, s - 1));
            }
            match e.checked_add(1) {
                Some(next) => cursor = cursor.max(next),
                None => return out,
            }
            if cursor > hi {
                return out;
            }
        }
        if cursor <= hi {
            out.push((cursor, hi));
        }
        out
    }

    /// Total number of keys covered. Saturates at `u64::MAX`.
    pub fn covered_count(&self) -> u64 {
        self.ranges
            .iter()
            .fold(0u64, |acc, &(s, e)| acc.saturating_add(e - s + 1))
    }
}
