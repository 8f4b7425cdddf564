//! Simulated byte-addressable PCM device.
//!
//! Every access is charged against a latency cost model and a per-line wear
//! map. Writes are data-comparison writes: the new line image is diffed
//! against the old one word by word, and only lines with at least one
//! modified 8-byte word are flushed. A full-line flush costs one write
//! latency because the eight ranks service a 64-byte line in parallel;
//! distinct dirty lines serialize.

use std::collections::BTreeMap;

use thiserror::Error;

pub const LINE_SIZE: usize = 64;
pub const WORD_SIZE: usize = 8;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("allocation of {requested} bytes exceeds free capacity ({free} bytes left)")]
    OutOfCapacity { requested: usize, free: usize },
    #[error("access at offset {offset} len {len} out of bounds of region of {region_len} bytes")]
    OutOfBounds {
        offset: usize,
        len: usize,
        region_len: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub line_size: usize,
    pub read_latency_ns: u64,
    pub write_latency_ns: u64,
    pub ranks: usize,
    pub rank_width: usize,
    /// Recorded and reported; latency-based accounting is authoritative.
    pub write_bandwidth: u64,
    pub capacity_bytes: usize,
}

impl DeviceConfig {
    pub fn with_capacity(capacity_bytes: usize) -> Self {
        DeviceConfig {
            line_size: LINE_SIZE,
            read_latency_ns: 50,
            write_latency_ns: 1000,
            ranks: 8,
            rank_width: 8,
            write_bandwidth: 64_000_000,
            capacity_bytes,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.line_size != self.ranks * self.rank_width {
            return Err(format!(
                "line_size {} must equal ranks * rank_width ({} * {})",
                self.line_size, self.ranks, self.rank_width
            ));
        }
        if self.read_latency_ns == 0 || self.write_latency_ns == 0 {
            return Err("latencies must be positive".into());
        }
        if self.capacity_bytes % self.line_size != 0 {
            return Err(format!(
                "capacity {} is not a multiple of line size {}",
                self.capacity_bytes, self.line_size
            ));
        }
        Ok(())
    }
}

/// Line-aligned slice of the device address space handed out by `alloc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub base: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReceipt {
    pub lines_flushed: u64,
    pub words_modified: u64,
    pub bits_modified: u64,
    pub cost_ns: u64,
}

impl WriteReceipt {
    pub fn add(&mut self, other: &WriteReceipt) {
        self.lines_flushed += other.lines_flushed;
        self.words_modified += other.words_modified;
        self.bits_modified += other.bits_modified;
        self.cost_ns += other.cost_ns;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceStats {
    pub reads: u64,
    pub line_flushes: u64,
    pub words_modified: u64,
    pub bits_modified: u64,
    pub sim_time_ns: u64,
    pub max_line_wear_bits: u64,
}

impl DeviceStats {
    pub fn csv_header() -> &'static str {
        "reads,line_flushes,words_modified,bits_modified,sim_time_ns,max_line_wear"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.reads,
            self.line_flushes,
            self.words_modified,
            self.bits_modified,
            self.sim_time_ns,
            self.max_line_wear_bits
        )
    }
}

pub struct SimDevice {
    config: DeviceConfig,
    contents: Vec<u8>,
    /// Total modified bits per line, over the device lifetime.
    wear_bits: Vec<u64>,
    /// Line flush count per line.
    wear_writes: Vec<u32>,
    sim_time_ns: u64,
    reads: u64,
    line_flushes: u64,
    words_modified: u64,
    bits_modified: u64,
    /// Free extents keyed by base address, coalesced on free.
    free: BTreeMap<usize, usize>,
}

impl SimDevice {
    pub fn new(config: DeviceConfig) -> Self {
        config.validate().expect("invalid device config");
        let lines = config.capacity_bytes / config.line_size;
        let mut free = BTreeMap::new();
        if config.capacity_bytes > 0 {
            free.insert(0, config.capacity_bytes);
        }
        SimDevice {
            contents: vec![0u8; config.capacity_bytes],
            wear_bits: vec![0; lines],
            wear_writes: vec![0; lines],
            sim_time_ns: 0,
            reads: 0,
            line_flushes: 0,
            words_modified: 0,
            bits_modified: 0,
            free,
            config,
        }
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn sim_time_ns(&self) -> u64 {
        self.sim_time_ns
    }

    /// Allocates a line-aligned, zeroed region. Zero fill is free: it models
    /// the initial state of the cells, not a data write.
    pub fn alloc(&mut self, size: usize) -> Result<Region, DeviceError> {
        assert!(size > 0, "zero-size allocation");
        let line = self.config.line_size;
        let len = size.div_ceil(line) * line;
        let found = self
            .free
            .iter()
            .find(|(_, &elen)| elen >= len)
            .map(|(&base, &elen)| (base, elen));
        let Some((base, elen)) = found else {
            let free_total: usize = self.free.values().sum();
            return Err(DeviceError::OutOfCapacity {
                requested: len,
                free: free_total,
            });
        };
        self.free.remove(&base);
        if elen > len {
            self.free.insert(base + len, elen - len);
        }
        // Reused memory keeps its old bit pattern until rewritten; hand the
        // caller a zeroed view without charging wear for the reset.
        self.contents[base..base + len].fill(0);
        Ok(Region { base, len })
    }

    pub fn free(&mut self, region: Region) {
        let mut base = region.base;
        let mut len = region.len;
        if let Some((&pbase, &plen)) = self.free.range(..base).next_back() {
            if pbase + plen == base {
                self.free.remove(&pbase);
                base = pbase;
                len += plen;
            }
        }
        if let Some(&nlen) = self.free.get(&(region.base + region.len)) {
            self.free.remove(&(region.base + region.len));
            len += nlen;
        }
        self.free.insert(base, len);
    }

    fn check(&self, region: &Region, offset: usize, len: usize) -> Result<(), DeviceError> {
        if offset.checked_add(len).is_none_or(|end| end > region.len) {
            return Err(DeviceError::OutOfBounds {
                offset,
                len,
                region_len: region.len,
            });
        }
        Ok(())
    }

    /// Reads `len` bytes, charging one read latency per distinct line touched.
    pub fn read(&mut self, region: &Region, offset: usize, len: usize) -> Result<Vec<u8>, DeviceError> {
        self.check(region, offset, len)?;
        if len == 0 {
            return Ok(Vec::new());
        }
        let start = region.base + offset;
        let lines = self.lines_touched(start, len);
        self.reads += lines;
        self.sim_time_ns += lines * self.config.read_latency_ns;
        Ok(self.contents[start..start + len].to_vec())
    }

    /// Data-comparison write: per touched line, diff new against old image in
    /// 8-byte words; a line with no modified word costs nothing and adds no
    /// wear.
    pub fn write(&mut self, region: &Region, offset: usize, data: &[u8]) -> Result<WriteReceipt, DeviceError> {
        self.check(region, offset, data.len())?;
        let mut receipt = WriteReceipt::default();
        if data.is_empty() {
            return Ok(receipt);
        }
        let line = self.config.line_size;
        let start = region.base + offset;
        let end = start + data.len();
        let first_line = start / line;
        let last_line = (end - 1) / line;
        for li in first_line..=last_line {
            let lstart = (li * line).max(start);
            let lend = ((li + 1) * line).min(end);
            let old = &self.contents[lstart..lend];
            let new = &data[lstart - start..lend - start];
            let mut line_words = 0u64;
            let mut line_bits = 0u64;
            // Word granularity follows the rank width; a partial word at the
            // edge of the write still counts as one word if any bit differs.
            let mut i = 0;
            while i < old.len() {
                let j = (i + WORD_SIZE).min(old.len());
                let mut word_bits = 0u32;
                for k in i..j {
                    word_bits += (old[k] ^ new[k]).count_ones();
                }
                if word_bits > 0 {
                    line_words += 1;
                    line_bits += word_bits as u64;
                }
                i = j;
            }
            if line_words > 0 {
                self.contents[lstart..lend].copy_from_slice(new);
                receipt.lines_flushed += 1;
                receipt.words_modified += line_words;
                receipt.bits_modified += line_bits;
                self.wear_bits[li] += line_bits;
                self.wear_writes[li] += 1;
            }
        }
        receipt.cost_ns = receipt.lines_flushed * self.config.write_latency_ns;
        self.line_flushes += receipt.lines_flushed;
        self.words_modified += receipt.words_modified;
        self.bits_modified += receipt.bits_modified;
        self.sim_time_ns += receipt.cost_ns;
        Ok(receipt)
    }

    fn lines_touched(&self, start: usize, len: usize) -> u64 {
        let line = self.config.line_size;
        let first = start / line;
        let last = (start + len - 1) / line;
        (last - first + 1) as u64
    }

    pub fn stats(&self) -> DeviceStats {
        DeviceStats {
            reads: self.reads,
            line_flushes: self.line_flushes,
            words_modified: self.words_modified,
            bits_modified: self.bits_modified,
            sim_time_ns: self.sim_time_ns,
            max_line_wear_bits: self.wear_bits.iter().copied().max().unwrap_or(0),
        }
    }

    /// Zeroes the counters; contents and the wear map are preserved.
    pub fn reset_stats(&mut self) {
        self.reads = 0;
        self.line_flushes = 0;
        self.words_modified = 0;
        self.bits_modified = 0;
        self.sim_time_ns = 0;
    }

    /// Uncharged view of stored bytes, for debugging and test inspection.
    pub fn peek(&self, region: &Region, offset: usize, len: usize) -> &[u8] {
        assert!(offset + len <= region.len, "peek out of bounds");
        let start = region.base + offset;
        &self.contents[start..start + len]
    }

    pub fn wear_bits_of_line(&self, line: usize) -> u64 {
        self.wear_bits[line]
    }

    pub fn total_wear_bits(&self) -> u64 {
        self.wear_bits.iter().sum()
    }
}
