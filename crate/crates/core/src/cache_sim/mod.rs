//! Single-tier buffer emulator with pluggable replacement policies and the
//! offline Belady (optgen) oracle.

mod optgen;
mod policies;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trace::Trace;

pub use optgen::{brute_force_optimal, next_uses, simulate_optgen, BRUTE_FORCE_MAX_CAPACITY, BRUTE_FORCE_MAX_LEN};
pub use policies::{Lfu, Lru, ReplacementPolicy, Srrip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Lru,
    Lfu,
    Srrip,
    Optgen,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Srrip, PolicyKind::Optgen];
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Srrip => "srrip",
            PolicyKind::Optgen => "optgen",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lru" => Ok(PolicyKind::Lru),
            "lfu" => Ok(PolicyKind::Lfu),
            "srrip" => Ok(PolicyKind::Srrip),
            "optgen" | "belady" | "opt" => Ok(PolicyKind::Optgen),
            other => Err(Error::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Associativity {
    Full,
    Ways(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheConfig {
    pub capacity: usize,
    pub associativity: Associativity,
    pub policy: PolicyKind,
    pub srrip_max_rrpv: u8,
}

impl CacheConfig {
    pub fn fully_associative(policy: PolicyKind, capacity: usize) -> Self {
        Self {
            capacity,
            associativity: Associativity::Full,
            policy,
            srrip_max_rrpv: 3,
        }
    }

    pub fn set_associative(policy: PolicyKind, capacity: usize, ways: usize) -> Self {
        Self {
            associativity: Associativity::Ways(ways),
            ..Self::fully_associative(policy, capacity)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("cache capacity must be >= 1".into()));
        }
        if let Associativity::Ways(w) = self.associativity {
            if w == 0 || !self.capacity.is_multiple_of(w) {
                return Err(Error::InvalidConfig(format!(
                    "{w} ways do not divide a capacity of {}",
                    self.capacity
                )));
            }
        }
        Ok(())
    }

    pub fn set_count(&self) -> usize {
        match self.associativity {
            Associativity::Full => 1,
            Associativity::Ways(w) => self.capacity / w,
        }
    }

    pub fn ways(&self) -> usize {
        self.capacity / self.set_count()
    }

    /// Short label such as `lru` or `lfu-32way`.
    pub fn label(&self) -> String {
        match self.associativity {
            Associativity::Full => self.policy.to_string(),
            Associativity::Ways(w) => format!("{}-{w}way", self.policy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub hits: usize,
    pub misses: usize,
    pub per_access_hit: Vec<bool>,
    /// Optgen only: the block of access `i` stays resident until its next
    /// reference. Last touches are labeled `false`.
    pub keep_decisions: Option<Vec<bool>>,
}

impl SimResult {
    pub(crate) fn from_hits(per_access_hit: Vec<bool>, keep_decisions: Option<Vec<bool>>) -> Self {
        let hits = per_access_hit.iter().filter(|&&h| h).count();
        Self {
            hits,
            misses: per_access_hit.len() - hits,
            per_access_hit,
            keep_decisions,
        }
    }

    pub fn hit_rate(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }
}

/// Outcome of one reference to an [`OnlineCache`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub evicted: Option<u64>,
}

/// Set-associative cache over one of the online policies.
pub struct OnlineCache {
    sets: Vec<Box<dyn ReplacementPolicy>>,
}

impl OnlineCache {
    pub fn new(cfg: &CacheConfig) -> Result<Self> {
        cfg.validate()?;
        let ways = cfg.ways();
        let sets = (0..cfg.set_count())
            .map(|_| -> Result<Box<dyn ReplacementPolicy>> {
                Ok(match cfg.policy {
                    PolicyKind::Lru => Box::new(Lru::new(ways)),
                    PolicyKind::Lfu => Box::new(Lfu::new(ways)),
                    PolicyKind::Srrip => Box::new(Srrip::new(ways, cfg.srrip_max_rrpv)),
                    PolicyKind::Optgen => {
                        return Err(Error::InvalidConfig("optgen needs the whole trace; use simulate".into()))
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sets })
    }

    fn set(&mut self, id: u64) -> &mut dyn ReplacementPolicy {
        let n = self.sets.len() as u64;
        self.sets[(id % n) as usize].as_mut()
    }

    pub fn contains(&self, id: u64) -> bool {
        let n = self.sets.len() as u64;
        self.sets[(id % n) as usize].contains(id)
    }

    /// Demand reference: hit, or miss followed by insertion.
    pub fn access(&mut self, id: u64) -> AccessOutcome {
        let set = self.set(id);
        if set.contains(id) {
            set.on_hit(id);
            AccessOutcome { hit: true, evicted: None }
        } else {
            AccessOutcome {
                hit: false,
                evicted: set.insert(id),
            }
        }
    }

    /// Inserts without counting a reference; a no-op for resident ids.
    pub fn prefetch(&mut self, id: u64) -> Option<u64> {
        let set = self.set(id);
        if set.contains(id) {
            None
        } else {
            set.insert(id)
        }
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn simulate(trace: &Trace, cfg: &CacheConfig) -> Result<SimResult> {
    cfg.validate()?;
    if cfg.policy == PolicyKind::Optgen {
        return optgen::simulate_optgen_sets(trace, cfg.capacity, cfg.set_count());
    }
    let mut cache = OnlineCache::new(cfg)?;
    let hits = trace.accesses().iter().map(|a| cache.access(a.global_id).hit).collect();
    Ok(SimResult::from_hits(hits, None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub policy: String,
    pub capacity: usize,
    pub hits: usize,
    pub hit_rate: f64,
}

/// Runs every `(config, capacity)` cell; rows come back in input order.
pub fn sweep(trace: &Trace, configs: &[CacheConfig], capacities: &[usize]) -> Result<Vec<SweepRow>> {
    let cells: Vec<(CacheConfig, usize)> = configs
        .iter()
        .flat_map(|c| capacities.iter().map(move |&cap| (*c, cap)))
        .collect();
    cells
        .par_iter()
        .map(|(c, cap)| {
            let cfg = CacheConfig { capacity: *cap, ..*c };
            let r = simulate(trace, &cfg)?;
            Ok(SweepRow {
                policy: cfg.label(),
                capacity: *cap,
                hits: r.hits,
                hit_rate: r.hit_rate(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("policy,capacity,hit_rate\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6}", r.policy, r.capacity, r.hit_rate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TableLayout;

    fn trace(ids: &[u64]) -> Trace {
        Trace::from_global_ids(TableLayout::new(vec![64]).unwrap(), ids).unwrap()
    }

    const ABCABC: [u64; 6] = [0, 1, 2, 0, 1, 2];

    #[test]
    fn lru_hand_examples() {
        let lru2 = simulate(&trace(&ABCABC), &CacheConfig::fully_associative(PolicyKind::Lru, 2)).unwrap();
        assert_eq!(lru2.hits, 0);
        let lru3 = simulate(&trace(&ABCABC), &CacheConfig::fully_associative(PolicyKind::Lru, 3)).unwrap();
        assert_eq!(lru3.hits, 3);
        assert_eq!(lru3.hits + lru3.misses, 6);
    }

    #[test]
    fn lfu_hand_example() {
        let r = simulate(&trace(&[0, 0, 1, 2, 0]), &CacheConfig::fully_associative(PolicyKind::Lfu, 2)).unwrap();
        assert_eq!(r.per_access_hit, vec![false, true, false, false, true]);
    }

    #[test]
    fn set_index_is_id_mod_sets() {
        // 2 sets of 1 way: 0 and 2 collide, 1 does not
        let cfg = CacheConfig::set_associative(PolicyKind::Lru, 2, 1);
        let r = simulate(&trace(&[0, 1, 2, 1, 0]), &cfg).unwrap();
        assert_eq!(r.per_access_hit, vec![false, false, false, true, false]);
    }

    #[test]
    fn config_validation() {
        assert!(CacheConfig::fully_associative(PolicyKind::Lru, 0).validate().is_err());
        assert!(CacheConfig::set_associative(PolicyKind::Lru, 10, 3).validate().is_err());
        assert!(CacheConfig::set_associative(PolicyKind::Lru, 12, 3).validate().is_ok());
        assert_eq!(CacheConfig::set_associative(PolicyKind::Lfu, 64, 32).label(), "lfu-32way");
    }

    #[test]
    fn single_pass_traces_never_hit() {
        let ids: Vec<u64> = (0..40).collect();
        for policy in PolicyKind::ALL {
            for rrpv in [0u8, 3] {
                let cfg = CacheConfig {
                    srrip_max_rrpv: rrpv,
                    ..CacheConfig::fully_associative(policy, 4)
                };
                assert_eq!(simulate(&trace(&ids), &cfg).unwrap().hits, 0, "{policy}");
            }
        }
    }

    #[test]
    fn policy_names_parse() {
        for p in PolicyKind::ALL {
            assert_eq!(p.to_string().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("mru".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn sweep_preserves_order() {
        let t = trace(&[0, 1, 2, 0, 1, 2, 3, 0]);
        let cfgs = [
            CacheConfig::fully_associative(PolicyKind::Lru, 1),
            CacheConfig::fully_associative(PolicyKind::Optgen, 1),
        ];
        let rows = sweep(&t, &cfgs, &[1, 2, 3]).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| (r.policy.as_str(), r.capacity)).collect();
        assert_eq!(
            labels,
            vec![("lru", 1), ("lru", 2), ("lru", 3), ("optgen", 1), ("optgen", 2), ("optgen", 3)]
        );
        assert!(sweep_csv(&rows).starts_with("policy,capacity,hit_rate\nlru,1,"));
    }
}
