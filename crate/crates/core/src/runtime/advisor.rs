use std::collections::HashSet;

use crate::cache_sim::simulate_optgen;
use crate::error::Result;
use crate::labeler::label_capacity;
use crate::neural::{decode_indices, forward_caching, forward_prefetch, ModelKind, ModelParameters};
use crate::scalar::Scalar;
use crate::trace::{EmbeddingIndex, Trace};

/// Per-chunk placement advice: one caching bit per served access and a list
/// of ids to prefetch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Advice {
    pub bits: Vec<bool>,
    pub prefetch: Vec<EmbeddingIndex>,
}

/// Source of per-chunk advice. Advice depends only on the chunk, never on
/// buffer state, so a replay can evaluate every chunk up front in parallel.
pub trait Advisor: Sync {
    /// `origin` is the trace position of the chunk's first access.
    fn advise(&self, origin: usize, input: &[EmbeddingIndex]) -> Result<Advice>;
}

/// All-zero bits and no prefetches.
pub struct NullAdvisor;

impl Advisor for NullAdvisor {
    fn advise(&self, _: usize, input: &[EmbeddingIndex]) -> Result<Advice> {
        Ok(Advice {
            bits: vec![false; input.len()],
            prefetch: Vec::new(),
        })
    }
}

/// Trained models; a missing model contributes zero bits or no prefetches.
pub struct ModelAdvisor<'a, T> {
    pub caching: Option<&'a ModelParameters<T>>,
    pub prefetch: Option<&'a ModelParameters<T>>,
}

impl<T: Scalar> Advisor for ModelAdvisor<'_, T> {
    fn advise(&self, _: usize, input: &[EmbeddingIndex]) -> Result<Advice> {
        let bits = match self.caching {
            Some(p) => forward_caching(p, input)?
                .into_iter()
                .map(|q| q.to_f64_lossless() >= 0.5)
                .collect(),
            None => vec![false; input.len()],
        };
        let prefetch = match self.prefetch {
            Some(p) => decode_indices(&forward_prefetch(p, input)?, &p.vocabulary),
            None => Vec::new(),
        };
        Ok(Advice { bits, prefetch })
    }
}

impl<'a, T: Scalar> ModelAdvisor<'a, T> {
    pub fn new(caching: Option<&'a ModelParameters<T>>, prefetch: Option<&'a ModelParameters<T>>) -> Self {
        debug_assert!(caching.is_none_or(|p| p.kind == ModelKind::Caching));
        debug_assert!(prefetch.is_none_or(|p| p.kind == ModelKind::Prefetch));
        Self { caching, prefetch }
    }
}

/// Labels computed from the future: optgen keep bits and the first
/// `output_len` optgen misses of the window that follows each chunk.
pub struct OracleAdvisor {
    accesses: Vec<EmbeddingIndex>,
    keep: Vec<bool>,
    hit: Vec<bool>,
    output_len: usize,
    window_len: usize,
    pub use_bits: bool,
    pub use_prefetch: bool,
}

impl OracleAdvisor {
    /// Labels at the same scaled capacity the training labels use.
    pub fn new(trace: &Trace, gpu_capacity: usize, output_len: usize, window_len: usize) -> Result<Self> {
        let r = simulate_optgen(trace, label_capacity(gpu_capacity)?)?;
        Ok(Self {
            accesses: trace.accesses().to_vec(),
            keep: r.keep_decisions.unwrap_or_default(),
            hit: r.per_access_hit,
            output_len,
            window_len,
            use_bits: true,
            use_prefetch: true,
        })
    }

    pub fn bits_only(mut self) -> Self {
        self.use_prefetch = false;
        self
    }

    pub fn prefetch_only(mut self) -> Self {
        self.use_bits = false;
        self
    }
}

impl Advisor for OracleAdvisor {
    fn advise(&self, origin: usize, input: &[EmbeddingIndex]) -> Result<Advice> {
        let end = origin + input.len();
        let bits = if self.use_bits {
            self.keep[origin..end].to_vec()
        } else {
            vec![false; input.len()]
        };
        let mut prefetch = Vec::new();
        if self.use_prefetch {
            let stop = (end + self.window_len).min(self.accesses.len());
            let mut seen = HashSet::new();
            for i in end..stop {
                if prefetch.len() == self.output_len {
                    break;
                }
                if !self.hit[i] && seen.insert(self.accesses[i].global_id) {
                    prefetch.push(self.accesses[i]);
                }
            }
        }
        Ok(Advice { bits, prefetch })
    }
}

/// Caching bits from one advisor, prefetches from another.
pub struct Combined<'a> {
    pub bits: &'a dyn Advisor,
    pub prefetch: &'a dyn Advisor,
}

impl Advisor for Combined<'_> {
    fn advise(&self, origin: usize, input: &[EmbeddingIndex]) -> Result<Advice> {
        Ok(Advice {
            bits: self.bits.advise(origin, input)?.bits,
            prefetch: self.prefetch.advise(origin, input)?.prefetch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Hyper, Init};
    use crate::trace::TableLayout;

    fn trace(ids: &[u64]) -> Trace {
        Trace::from_global_ids(TableLayout::new(vec![16]).unwrap(), ids).unwrap()
    }

    #[test]
    fn oracle_prefetches_first_window_misses() {
        // label capacity floor(0.8 * 3) = 2
        let t = trace(&[0, 1, 2, 3, 0, 4, 4, 5, 1]);
        let o = OracleAdvisor::new(&t, 3, 2, 4).unwrap();
        let a = o.advise(0, &t.accesses()[..3]).unwrap();
        let sim = simulate_optgen(&t, 2).unwrap();
        let expect: Vec<u64> = (3..7).filter(|&i| !sim.per_access_hit[i]).map(|i| t.global_ids()[i]).take(2).collect();
        assert_eq!(a.prefetch.iter().map(|x| x.global_id).collect::<Vec<_>>(), expect);
        assert_eq!(a.bits, sim.keep_decisions.unwrap()[..3].to_vec());
        assert!(o.prefetch_only().advise(0, &t.accesses()[..3]).unwrap().bits.iter().all(|b| !b));
    }

    #[test]
    fn zero_models_give_midpoint_bits_and_equal_prefetches() {
        let v = TableLayout::new(vec![16]).unwrap();
        let h = Hyper {
            id_dim: 2,
            table_dim: 1,
            hidden: 3,
            stacks: 1,
            input_len: 3,
            output_len: 2,
        };
        let c = ModelParameters::<f64>::new(ModelKind::Caching, h, v.clone(), Init::Zeros).unwrap();
        let p = ModelParameters::<f64>::new(ModelKind::Prefetch, Hyper { stacks: 2, ..h }, v, Init::Zeros).unwrap();
        let t = trace(&[1, 2, 3]);
        let a = ModelAdvisor::new(Some(&c), Some(&p)).advise(0, t.accesses()).unwrap();
        assert_eq!(a.bits, vec![true; 3]);
        assert_eq!(a.prefetch.len(), 2);
        assert_eq!(a.prefetch[0], a.prefetch[1]);
        let n = NullAdvisor.advise(0, t.accesses()).unwrap();
        assert_eq!(n, Advice { bits: vec![false; 3], prefetch: vec![] });
    }
}
