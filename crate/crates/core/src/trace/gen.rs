use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::{TableLayout, Trace};
use crate::error::{Error, Result};

/// Parameters of the synthetic trace generator.
///
/// Each access is drawn, with probability `markov_stickiness`, uniformly
/// from the `correlation_pool_size` most recently accessed distinct ids;
/// otherwise from a Zipf law over the flattened id space where global id
/// `k` has popularity rank `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGenConfig {
    pub table_sizes: Vec<u64>,
    pub total_accesses: usize,
    pub zipf_exponent: f64,
    pub markov_stickiness: f64,
    pub correlation_pool_size: usize,
    pub seed: u64,
}

impl Default for TraceGenConfig {
    fn default() -> Self {
        Self {
            table_sizes: vec![2500; 4],
            total_accesses: 100_000,
            zipf_exponent: 1.1,
            markov_stickiness: 0.3,
            correlation_pool_size: 32,
            seed: 7,
        }
    }
}

impl TraceGenConfig {
    pub fn validate(&self) -> Result<()> {
        TableLayout::new(self.table_sizes.clone())?;
        if self.total_accesses == 0 {
            return Err(Error::InvalidConfig("total_accesses must be positive".into()));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "zipf_exponent must be a finite non-negative real, got {}",
                self.zipf_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.markov_stickiness) {
            return Err(Error::InvalidConfig(format!(
                "markov_stickiness must lie in [0, 1], got {}",
                self.markov_stickiness
            )));
        }
        if self.markov_stickiness > 0.0 && self.correlation_pool_size == 0 {
            return Err(Error::InvalidConfig(
                "correlation_pool_size must be positive when markov_stickiness > 0".into(),
            ));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Unknown keys are rejected; missing
    /// keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |_| parse_err(format!("bad value {value:?} for {key}"));
            match key {
                "table_sizes" => {
                    cfg.table_sizes = value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(format!("bad table_sizes {value:?}")))?
                }
                "total_accesses" => cfg.total_accesses = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "zipf_exponent" => cfg.zipf_exponent = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "markov_stickiness" => cfg.markov_stickiness = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "correlation_pool_size" => {
                    cfg.correlation_pool_size = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "seed" => cfg.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                _ => return Err(parse_err(format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.table_sizes.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "table_sizes = {}", sizes.join(","));
        let _ = writeln!(s, "total_accesses = {}", self.total_accesses);
        let _ = writeln!(s, "zipf_exponent = {}", self.zipf_exponent);
        let _ = writeln!(s, "markov_stickiness = {}", self.markov_stickiness);
        let _ = writeln!(s, "correlation_pool_size = {}", self.correlation_pool_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

pub fn generate_trace(cfg: &TraceGenConfig) -> Result<Trace> {
    cfg.validate()?;
    let layout = TableLayout::new(cfg.table_sizes.clone())?;
    let n = layout.total();
    let zipf = Zipf::new(n as f64, cfg.zipf_exponent)
        .map_err(|e| Error::InvalidConfig(format!("zipf distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // most recent distinct ids, front = newest
    let mut pool: VecDeque<u64> = VecDeque::with_capacity(cfg.correlation_pool_size + 1);
    let mut ids = Vec::with_capacity(cfg.total_accesses);
    for _ in 0..cfg.total_accesses {
        let sticky = !pool.is_empty() && rng.random::<f64>() < cfg.markov_stickiness;
        let g = if sticky {
            pool[rng.random_range(0..pool.len())]
        } else {
            let rank = zipf.sample(&mut rng) as u64;
            rank.clamp(1, n) - 1
        };
        if cfg.correlation_pool_size > 0 {
            if let Some(pos) = pool.iter().position(|&x| x == g) {
                pool.remove(pos);
            }
            pool.push_front(g);
            pool.truncate(cfg.correlation_pool_size);
        }
        ids.push(g);
    }
    Trace::from_global_ids(layout, &ids)
}
