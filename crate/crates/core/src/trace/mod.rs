//! Access-trace data model, synthetic generation, text IO and chunking.

mod chunk;
mod gen;
mod io;

use std::collections::HashSet;

use crate::error::{Error, Result};

pub use chunk::{chunk, ChunkSpec, SequenceSample};
pub use gen::{generate_trace, TraceGenConfig};
pub use io::{parse_trace, read_trace, render_trace, write_trace};
pub(crate) use io::parse_header as io_parse_header;

/// Row counts of every embedding table plus the cumulative offsets that
/// flatten `(table_id, row_id)` into one global id space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableLayout {
    sizes: Vec<u64>,
    offsets: Vec<u64>,
    total: u64,
}

impl TableLayout {
    pub fn new(sizes: Vec<u64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidConfig("at least one table is required".into()));
        }
        if let Some(t) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!("table {t} has zero rows")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0u64;
        for &s in &sizes {
            offsets.push(total);
            total = total
                .checked_add(s)
                .ok_or_else(|| Error::InvalidConfig("table sizes overflow u64".into()))?;
        }
        Ok(Self {
            sizes,
            offsets,
            total,
        })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn num_tables(&self) -> usize {
        self.sizes.len()
    }

    /// Number of distinct global ids.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn index(&self, table_id: u32, row_id: u64) -> Result<EmbeddingIndex> {
        let t = table_id as usize;
        let size = *self.sizes.get(t).ok_or_else(|| {
            Error::validation(None, format!("table {table_id} does not exist ({} tables)", self.sizes.len()))
        })?;
        if row_id >= size {
            return Err(Error::validation(
                None,
                format!("row {row_id} is out of range for table {table_id} of size {size}"),
            ));
        }
        Ok(EmbeddingIndex {
            table_id,
            row_id,
            global_id: self.offsets[t] + row_id,
        })
    }

    pub fn from_global(&self, global_id: u64) -> Result<EmbeddingIndex> {
        if global_id >= self.total {
            return Err(Error::OutOfVocabulary {
                global_id,
                total: self.total,
            });
        }
        // last table whose offset is <= global_id
        let t = self.offsets.partition_point(|&o| o <= global_id) - 1;
        Ok(EmbeddingIndex {
            table_id: t as u32,
            row_id: global_id - self.offsets[t],
            global_id,
        })
    }

    /// Stable fingerprint of the table sizes, recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.sizes {
            h.update(s.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Identity of one embedding vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmbeddingIndex {
    pub table_id: u32,
    pub row_id: u64,
    pub global_id: u64,
}

/// Ordered embedding-vector accesses over a fixed table layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    accesses: Vec<EmbeddingIndex>,
    layout: TableLayout,
    unique_count: usize,
}

impl Trace {
    /// Validates every access against `layout`.
    pub fn new(layout: TableLayout, accesses: Vec<EmbeddingIndex>) -> Result<Self> {
        for (i, a) in accesses.iter().enumerate() {
            let expect = layout.index(a.table_id, a.row_id).map_err(|e| match e {
                Error::Validation { msg, .. } => Error::validation(None, format!("access {i}: {msg}")),
                other => other,
            })?;
            if expect.global_id != a.global_id {
                return Err(Error::validation(
                    None,
                    format!("access {i}: global id {} does not match ({}, {})", a.global_id, a.table_id, a.row_id),
                ));
            }
        }
        let unique_count = accesses.iter().map(|a| a.global_id).collect::<HashSet<_>>().len();
        Ok(Self {
            accesses,
            layout,
            unique_count,
        })
    }

    /// Builds a trace from flattened ids.
    pub fn from_global_ids(layout: TableLayout, ids: &[u64]) -> Result<Self> {
        let accesses = ids
            .iter()
            .map(|&g| layout.from_global(g))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layout, accesses)
    }

    pub fn accesses(&self) -> &[EmbeddingIndex] {
        &self.accesses
    }

    pub fn layout(&self) -> &TableLayout {
        &self.layout
    }

    pub fn unique_count(&self) -> usize {
        self.unique_count
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn global_ids(&self) -> Vec<u64> {
        self.accesses.iter().map(|a| a.global_id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_ids_are_a_bijection() {
        let layout = TableLayout::new(vec![3, 1, 4]).unwrap();
        assert_eq!(layout.total(), 8);
        for g in 0..layout.total() {
            let ix = layout.from_global(g).unwrap();
            assert_eq!(layout.index(ix.table_id, ix.row_id).unwrap(), ix);
        }
        assert_eq!(layout.index(2, 0).unwrap().global_id, 4);
        assert!(layout.index(1, 1).is_err());
        assert!(layout.from_global(8).is_err());
    }

    #[test]
    fn rejects_empty_layouts() {
        assert!(TableLayout::new(vec![]).is_err());
        assert!(TableLayout::new(vec![2, 0]).is_err());
    }

    #[test]
    fn unique_count_is_recomputed() {
        let layout = TableLayout::new(vec![10]).unwrap();
        let t = Trace::from_global_ids(layout, &[1, 2, 1, 9, 2]).unwrap();
        assert_eq!(t.unique_count(), 3);
    }

    #[test]
    fn fingerprint_tracks_sizes() {
        let a = TableLayout::new(vec![4, 4]).unwrap();
        let b = TableLayout::new(vec![4, 5]).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
