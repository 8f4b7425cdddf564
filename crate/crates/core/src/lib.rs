//! Deterministic simulator for adaptive merging index structures on
//! phase-change memory. The [`device`] module models the memory with a
//! data-comparison-write cost model; [`sectioned`] and [`bbtree`] implement
//! the buffered two-section B+tree family; [`pam`] and [`merging`] implement
//! the partition-based adaptive merge methods on top of it.

pub mod bbtree;
pub mod bench;
pub mod device;
pub mod entry;
pub mod index;
pub mod inner;
pub mod interval;
pub mod merging;
pub mod pam;
pub mod partition;
pub mod pbtree;
pub mod sectioned;
pub mod workload;
