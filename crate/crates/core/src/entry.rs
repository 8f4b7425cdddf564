//! Merge-index entries and their fixed 16-byte PCM encoding.

/// A merge-index element: key plus opaque record identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub key: u64,
    pub rid: u64,
}

pub const ENTRY_BYTES: usize = 16;

impl Entry {
    pub fn new(key: u64, rid: u64) -> Self {
        Entry { key, rid }
    }

    pub fn encode(&self) -> [u8; ENTRY_BYTES] {
        let mut out = [0u8; ENTRY_BYTES];
        out[..8].copy_from_slice(&self.key.to_le_bytes());
        out[8..].copy_from_slice(&self.rid.to_le_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Self {
        Entry {
            key: u64::from_le_bytes(buf[..8].try_into().unwrap()),
            rid: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        }
    }
}

/// One element of a bulkload batch. The tombstone mark travels out of line
/// with the entry; it is never persisted in a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOp {
    pub entry: Entry,
    pub tombstone: bool,
}

impl BatchOp {
    pub fn insert(entry: Entry) -> Self {
        BatchOp {
            entry,
            tombstone: false,
        }
    }

    pub fn tombstone(key: u64) -> Self {
        BatchOp {
            entry: Entry::new(key, 0),
            tombstone: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let e = Entry::new(0xdead_beef, u64::MAX);
        assert_eq!(Entry::decode(&e.encode()), e);
        assert_eq!(e.encode().len(), 16);
    }
}
