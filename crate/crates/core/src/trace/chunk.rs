use super::{EmbeddingIndex, Trace};
use crate::error::{Error, Result};

/// Chunk geometry shared by labeling, training and replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpec {
    pub input_len: usize,
    pub output_len: usize,
    pub window_ratio: usize,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        Self {
            input_len: 15,
            output_len: 5,
            window_ratio: 3,
        }
    }
}

impl ChunkSpec {
    pub fn new(input_len: usize, output_len: usize, window_ratio: usize) -> Result<Self> {
        let spec = Self {
            input_len,
            output_len,
            window_ratio,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.output_len == 0 {
            return Err(Error::InvalidConfig("chunk input and output lengths must be >= 1".into()));
        }
        if self.window_ratio == 0 {
            return Err(Error::InvalidConfig("window_ratio must be >= 1".into()));
        }
        Ok(())
    }

    /// Evaluation-window length, `window_ratio * output_len`.
    pub fn window_len(&self) -> usize {
        self.window_ratio * self.output_len
    }
}

/// One fixed-length input chunk plus its (optional) supervision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSample {
    pub origin: usize,
    pub input: Vec<EmbeddingIndex>,
    pub cache_labels: Option<Vec<bool>>,
    pub prefetch_targets: Option<Vec<EmbeddingIndex>>,
    pub window: Option<Vec<EmbeddingIndex>>,
}

impl SequenceSample {
    pub fn unlabeled(origin: usize, input: Vec<EmbeddingIndex>) -> Self {
        Self {
            origin,
            input,
            cache_labels: None,
            prefetch_targets: None,
            window: None,
        }
    }
}

/// Splits `trace` into consecutive non-overlapping chunks. A chunk is kept
/// only when a full evaluation window follows it; the window starts right
/// after the chunk's last access.
pub fn chunk(trace: &Trace, spec: ChunkSpec) -> Result<Vec<SequenceSample>> {
    spec.validate()?;
    let acc = trace.accesses();
    let (l_in, l_win) = (spec.input_len, spec.window_len());
    let mut out = Vec::new();
    let mut origin = 0;
    while origin + l_in + l_win <= acc.len() {
        let end = origin + l_in;
        out.push(SequenceSample {
            origin,
            input: acc[origin..end].to_vec(),
            cache_labels: None,
            prefetch_targets: None,
            window: Some(acc[end..end + l_win].to_vec()),
        });
        origin = end;
    }
    Ok(out)
}
