//! Enumeration caps for exact evaluation.
//!
//! Exact results come from summing over every sequence (`V^L` table entries)
//! and, where requested, every scan permutation (`L!`). The caps below keep
//! those enumerations at desk scale; both are overridable per run.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Maximum number of entries in an explicit joint table (`V^L`).
    pub max_table_entries: u64,
    /// Maximum number of permutations enumerated exactly (`L!`).
    pub max_perms: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_table_entries: 1_000_000,
            max_perms: 5040,
        }
    }
}

impl Caps {
    /// Table size `vocab^len`, or `CapExceeded` if it is over the cap.
    pub fn table_entries(&self, vocab: usize, len: usize) -> Result<usize> {
        let mut entries: u128 = 1;
        for _ in 0..len {
            entries = entries.saturating_mul(vocab as u128);
            if entries > self.max_table_entries as u128 {
                return Err(Error::CapExceeded {
                    what: "joint table",
                    required: entries,
                    cap: self.max_table_entries as u128,
                });
            }
        }
        Ok(entries as usize)
    }

    /// `len!`, or `CapExceeded` if enumerating that many permutations is over the cap.
    pub fn perm_count(&self, len: usize) -> Result<u64> {
        let mut count: u128 = 1;
        for k in 2..=len as u128 {
            count = count.saturating_mul(k);
            if count > self.max_perms as u128 {
                return Err(Error::CapExceeded {
                    what: "permutation enumeration",
                    required: count,
                    cap: self.max_perms as u128,
                });
            }
        }
        Ok(count as u64)
    }
}
