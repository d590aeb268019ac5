use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::advisor::{Advice, Advisor, ModelAdvisor};
use super::buffer::{PriorityBuffer, ScanOrder, DEFAULT_EVICTION_SPEED};
use crate::cache_sim::{next_uses, CacheConfig, OnlineCache, PolicyKind};
use crate::error::{Error, Result};
use crate::neural::{ModelKind, ModelParameters};
use crate::scalar::Scalar;
use crate::trace::{ChunkSpec, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub eviction_speed: u32,
    pub scan_order: ScanOrder,
    pub chunk: ChunkSpec,
}

impl ReplayConfig {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            eviction_speed: DEFAULT_EVICTION_SPEED,
            scan_order: ScanOrder::default(),
            chunk: ChunkSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be >= 1".into()));
        }
        self.chunk.validate()
    }
}

/// Three-way split of every access plus prefetch quality.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownReport {
    pub policy: String,
    pub capacity: usize,
    pub total: usize,
    pub cache_hits: usize,
    pub prefetch_hits: usize,
    pub on_demand: usize,
    pub prefetch_issued: usize,
    pub prefetch_useful: usize,
    coverage_sum: f64,
    pub coverage_chunks: usize,
    /// Largest occupancy seen after any insertion.
    pub max_occupancy: usize,
}

impl BreakdownReport {
    fn empty(policy: &str, capacity: usize) -> Self {
        Self {
            policy: policy.to_string(),
            capacity,
            total: 0,
            cache_hits: 0,
            prefetch_hits: 0,
            on_demand: 0,
            prefetch_issued: 0,
            prefetch_useful: 0,
            coverage_sum: 0.0,
            coverage_chunks: 0,
            max_occupancy: 0,
        }
    }

    pub fn hits(&self) -> usize {
        self.cache_hits + self.prefetch_hits
    }

    pub fn hit_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits() as f64 / self.total as f64
        }
    }

    /// Useful prefetches over issued prefetches; 0 when none were issued.
    pub fn correctness(&self) -> f64 {
        if self.prefetch_issued == 0 {
            0.0
        } else {
            self.prefetch_useful as f64 / self.prefetch_issued as f64
        }
    }

    /// Mean coverage over chunks that issued prefetches.
    pub fn coverage(&self) -> f64 {
        if self.coverage_chunks == 0 {
            0.0
        } else {
            self.coverage_sum / self.coverage_chunks as f64
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6}",
            self.policy,
            self.capacity,
            self.cache_hits,
            self.prefetch_hits,
            self.on_demand,
            self.correctness(),
            self.coverage()
        )
    }
}

pub const BREAKDOWN_HEADER: &str = "policy,capacity,cache_hits,prefetch_hits,on_demand,correctness,coverage";

pub fn breakdown_csv(reports: &[BreakdownReport]) -> String {
    let mut s = format!("{BREAKDOWN_HEADER}\n");
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// `|P ∩ G| / |G|` over unique ids.
pub fn coverage(predicted: &[u64], ground_truth: &[u64]) -> f64 {
    let g: HashSet<u64> = ground_truth.iter().copied().collect();
    if g.is_empty() {
        return 0.0;
    }
    let p: HashSet<u64> = predicted.iter().copied().collect();
    p.intersection(&g).count() as f64 / g.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Served {
    CacheHit,
    PrefetchHit,
    Miss,
}

trait Store {
    fn serve(&mut self, pos: usize, id: u64) -> Result<Served>;
    /// Applies chunk advice; `next` is the trace position of the next access.
    fn apply(&mut self, next: usize, chunk: &[u64], advice: &Advice) -> Result<()>;
    fn len(&self) -> usize;
}

struct PriorityStore(PriorityBuffer);

impl Store for PriorityStore {
    fn serve(&mut self, _: usize, id: u64) -> Result<Served> {
        match self.0.touch(id) {
            Some(true) => Ok(Served::PrefetchHit),
            Some(false) => Ok(Served::CacheHit),
            None => {
                let speed = self.0.eviction_speed();
                self.0.insert(id, speed, false)?;
                Ok(Served::Miss)
            }
        }
    }

    fn apply(&mut self, _: usize, chunk: &[u64], advice: &Advice) -> Result<()> {
        let p: Vec<u64> = advice.prefetch.iter().map(|x| x.global_id).collect();
        self.0.load_embeddings(chunk, &advice.bits, &p)?;
        Ok(())
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

struct PolicyStore {
    cache: OnlineCache,
    prefetched: HashSet<u64>,
}

impl Store for PolicyStore {
    fn serve(&mut self, _: usize, id: u64) -> Result<Served> {
        let out = self.cache.access(id);
        if let Some(v) = out.evicted {
            self.prefetched.remove(&v);
        }
        Ok(match (out.hit, self.prefetched.remove(&id)) {
            (true, true) => Served::PrefetchHit,
            (true, false) => Served::CacheHit,
            (false, _) => Served::Miss,
        })
    }

    fn apply(&mut self, _: usize, _: &[u64], advice: &Advice) -> Result<()> {
        for p in &advice.prefetch {
            let g = p.global_id;
            if self.cache.contains(g) {
                continue;
            }
            if let Some(v) = self.cache.prefetch(g) {
                self.prefetched.remove(&v);
            }
            self.prefetched.insert(g);
        }
        Ok(())
    }

    fn len(&self) -> usize {
        self.cache.len()
    }
}

const NEVER: usize = usize::MAX;

/// Belady replacement with knowledge of the whole trace; prefetched blocks
/// are forced in and compete on their next reference like any other.
struct BeladyStore {
    capacity: usize,
    next: Vec<usize>,
    positions: HashMap<u64, Vec<usize>>,
    key: HashMap<u64, usize>,
    order: BTreeSet<(usize, Reverse<u64>)>,
    prefetched: HashSet<u64>,
}

impl BeladyStore {
    fn new(trace: &Trace, capacity: usize) -> Self {
        let ids = trace.global_ids();
        let mut positions: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, &g) in ids.iter().enumerate() {
            positions.entry(g).or_default().push(i);
        }
        Self {
            capacity,
            next: next_uses(&ids),
            positions,
            key: HashMap::new(),
            order: BTreeSet::new(),
            prefetched: HashSet::new(),
        }
    }

    fn place(&mut self, id: u64, next: usize) {
        if self.key.len() >= self.capacity {
            let (_, Reverse(v)) = self.order.pop_last().expect("full buffer is non-empty");
            self.key.remove(&v);
            self.prefetched.remove(&v);
        }
        self.key.insert(id, next);
        self.order.insert((next, Reverse(id)));
    }
}

impl Store for BeladyStore {
    fn serve(&mut self, pos: usize, id: u64) -> Result<Served> {
        let nu = self.next[pos];
        if let Some(k) = self.key.get_mut(&id) {
            self.order.remove(&(*k, Reverse(id)));
            *k = nu;
            self.order.insert((nu, Reverse(id)));
            return Ok(if self.prefetched.remove(&id) {
                Served::PrefetchHit
            } else {
                Served::CacheHit
            });
        }
        self.place(id, nu);
        Ok(Served::Miss)
    }

    fn apply(&mut self, next: usize, _: &[u64], advice: &Advice) -> Result<()> {
        for p in &advice.prefetch {
            let g = p.global_id;
            if self.key.contains_key(&g) {
                continue;
            }
            let nu = self
                .positions
                .get(&g)
                .and_then(|v| v.get(v.partition_point(|&x| x < next)).copied())
                .unwrap_or(NEVER);
            self.place(g, nu);
            self.prefetched.insert(g);
        }
        Ok(())
    }

    fn len(&self) -> usize {
        self.key.len()
    }
}

fn run(trace: &Trace, cfg: &ReplayConfig, advisor: Option<&dyn Advisor>, store: &mut dyn Store, label: &str) -> Result<BreakdownReport> {
    cfg.validate()?;
    let ids = trace.global_ids();
    let acc = trace.accesses();
    let li = cfg.chunk.input_len;
    let lw = cfg.chunk.window_len();
    let full = ids.len() / li;
    let advice: Vec<Advice> = match advisor {
        Some(a) => (0..full)
            .into_par_iter()
            .map(|c| a.advise(c * li, &acc[c * li..(c + 1) * li]))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };

    let mut rep = BreakdownReport::empty(label, cfg.capacity);
    let mut origin = 0;
    let mut c = 0;
    while origin < ids.len() {
        let end = (origin + li).min(ids.len());
        for (pos, &id) in ids.iter().enumerate().take(end).skip(origin) {
            match store.serve(pos, id)? {
                Served::CacheHit => rep.cache_hits += 1,
                Served::PrefetchHit => rep.prefetch_hits += 1,
                Served::Miss => rep.on_demand += 1,
            }
            rep.max_occupancy = rep.max_occupancy.max(store.len());
        }
        if end - origin == li {
            if let Some(a) = advice.get(c) {
                if a.bits.len() != li {
                    return Err(Error::LengthMismatch {
                        what: "caching bits vs chunk",
                        left: a.bits.len(),
                        right: li,
                    });
                }
                let mut seen = HashSet::new();
                let p: Vec<u64> = a.prefetch.iter().map(|x| x.global_id).filter(|g| seen.insert(*g)).collect();
                let window = &ids[end..(end + lw).min(ids.len())];
                rep.prefetch_issued += p.len();
                rep.prefetch_useful += p.iter().filter(|g| window.contains(g)).count();
                if !p.is_empty() && !window.is_empty() {
                    rep.coverage_sum += coverage(&p, window);
                    rep.coverage_chunks += 1;
                }
                store.apply(end, &ids[origin..end], a)?;
                rep.max_occupancy = rep.max_occupancy.max(store.len());
            }
        }
        origin = end;
        c += 1;
    }
    rep.total = ids.len();
    debug_assert_eq!(rep.hits() + rep.on_demand, rep.total);
    Ok(rep)
}

/// Replays the trace through the priority buffer, applying `advisor` after
/// every full chunk. The trailing partial chunk is served without advice.
pub fn replay(trace: &Trace, cfg: &ReplayConfig, advisor: &dyn Advisor, label: &str) -> Result<BreakdownReport> {
    let mut store = PriorityStore(PriorityBuffer::new(cfg.capacity, cfg.eviction_speed, cfg.scan_order)?);
    run(trace, cfg, Some(advisor), &mut store, label)
}

fn check_model<T: Scalar>(p: &ModelParameters<T>, kind: ModelKind, trace: &Trace, cfg: &ReplayConfig) -> Result<()> {
    if p.kind != kind {
        return Err(Error::InvalidConfig(format!("expected a {kind} model, got {}", p.kind)));
    }
    p.check_vocabulary(trace.layout())?;
    if p.hyper.input_len != cfg.chunk.input_len {
        return Err(Error::InvalidConfig(format!(
            "{kind} model was trained on chunks of {}, replay uses {}",
            p.hyper.input_len, cfg.chunk.input_len
        )));
    }
    if kind == ModelKind::Prefetch && p.hyper.output_len != cfg.chunk.output_len {
        return Err(Error::InvalidConfig(format!(
            "prefetch model emits {} ids, replay expects {}",
            p.hyper.output_len, cfg.chunk.output_len
        )));
    }
    Ok(())
}

/// Model-in-the-loop replay; either model may be absent.
pub fn replay_models<T: Scalar>(
    trace: &Trace,
    cfg: &ReplayConfig,
    caching: Option<&ModelParameters<T>>,
    prefetch: Option<&ModelParameters<T>>,
) -> Result<BreakdownReport> {
    if let Some(p) = caching {
        check_model(p, ModelKind::Caching, trace, cfg)?;
    }
    if let Some(p) = prefetch {
        check_model(p, ModelKind::Prefetch, trace, cfg)?;
    }
    let label = match (caching.is_some(), prefetch.is_some()) {
        (true, true) => "cm+pf",
        (true, false) => "cm",
        (false, true) => "pf",
        (false, false) => "priority",
    };
    replay(trace, cfg, &ModelAdvisor::new(caching, prefetch), label)
}

/// Same loop with a cache_sim policy managing the buffer and an optional
/// prefetch source. Optgen runs as Belady with full future knowledge.
pub fn replay_policy_only(trace: &Trace, cfg: &ReplayConfig, policy: PolicyKind, prefetcher: Option<&dyn Advisor>) -> Result<BreakdownReport> {
    let label = match prefetcher {
        Some(_) => format!("{policy}+pf"),
        None => policy.to_string(),
    };
    match policy {
        PolicyKind::Optgen => run(trace, cfg, prefetcher, &mut BeladyStore::new(trace, cfg.capacity), &label),
        p => {
            let cache = OnlineCache::new(&CacheConfig::fully_associative(p, cfg.capacity))?;
            let mut store = PolicyStore {
                cache,
                prefetched: HashSet::new(),
            };
            run(trace, cfg, prefetcher, &mut store, &label)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache_sim::{simulate, simulate_optgen};
    use crate::runtime::advisor::{NullAdvisor, OracleAdvisor};
    use crate::trace::{EmbeddingIndex, TableLayout};
    use proptest::prelude::*;

    fn trace(ids: &[u64]) -> Trace {
        Trace::from_global_ids(TableLayout::new(vec![32]).unwrap(), ids).unwrap()
    }

    fn cfg(capacity: usize, li: usize, lo: usize, ratio: usize) -> ReplayConfig {
        ReplayConfig {
            chunk: ChunkSpec::new(li, lo, ratio).unwrap(),
            ..ReplayConfig::new(capacity)
        }
    }

    #[test]
    fn policy_only_examples() {
        let t = trace(&[0, 1, 2, 0, 1, 2]);
        let c = cfg(2, 3, 1, 1);
        assert_eq!(replay_policy_only(&t, &c, PolicyKind::Lru, None).unwrap().on_demand, 6);
        assert_eq!(replay_policy_only(&t, &c, PolicyKind::Optgen, None).unwrap().on_demand, 4);
    }

    #[test]
    fn coverage_counts_unique_ids() {
        assert!((coverage(&[3, 9, 3], &[9, 1, 3, 3]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(coverage(&[1], &[]), 0.0);
    }

    #[test]
    fn null_advice_partitions_and_never_prefetches() {
        let t = trace(&[1, 2, 3, 1, 4, 5, 1, 2, 9, 9, 3]);
        let r = replay(&t, &cfg(3, 4, 2, 1), &NullAdvisor, "null").unwrap();
        assert_eq!(r.hits() + r.on_demand, 11);
        assert_eq!(r.prefetch_hits, 0);
        assert_eq!(r.prefetch_issued, 0);
        assert!(r.max_occupancy <= 3);
    }

    struct Fixed(Vec<u64>);

    impl Advisor for Fixed {
        fn advise(&self, _: usize, input: &[EmbeddingIndex]) -> Result<Advice> {
            let v = TableLayout::new(vec![32]).unwrap();
            Ok(Advice {
                bits: vec![true; input.len()],
                prefetch: self.0.iter().map(|&g| v.from_global(g).unwrap()).collect(),
            })
        }
    }

    #[test]
    fn prefetch_hits_are_attributed_once() {
        // chunk [1, 2] then prefetch 7; 7 is referenced twice afterwards
        let t = trace(&[1, 2, 7, 7]);
        let r = replay(&t, &cfg(4, 2, 1, 2), &Fixed(vec![7, 7]), "x").unwrap();
        assert_eq!((r.cache_hits, r.prefetch_hits, r.on_demand), (1, 1, 2));
        // the second chunk issues 7 again against an empty window
        assert_eq!((r.prefetch_issued, r.prefetch_useful), (2, 1));
        assert_eq!(r.coverage(), 1.0);
        let p = replay_policy_only(&t, &cfg(4, 2, 1, 2), PolicyKind::Lru, Some(&Fixed(vec![7]))).unwrap();
        assert_eq!((p.cache_hits, p.prefetch_hits, p.on_demand), (1, 1, 2));
    }

    #[test]
    fn correctness_grows_with_the_window() {
        let t = trace(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        let mut last = 0.0;
        for ratio in 1..=4 {
            let r = replay(&t, &cfg(3, 2, 1, ratio), &Fixed(vec![6]), "x").unwrap();
            assert!(r.correctness() >= last);
            last = r.correctness();
        }
        assert!(last > 0.0);
    }

    #[test]
    fn csv_layout() {
        let t = trace(&[0, 1, 0]);
        let r = replay_policy_only(&t, &cfg(1, 3, 1, 1), PolicyKind::Lru, None).unwrap();
        assert_eq!(breakdown_csv(&[r]), format!("{BREAKDOWN_HEADER}\nlru,1,0,0,3,0.000000,0.000000\n"));
    }

    proptest! {
        #[test]
        fn policy_only_matches_cache_sim(ids in proptest::collection::vec(0u64..16, 1..300), cap in 1usize..10) {
            let t = trace(&ids);
            let c = cfg(cap, 5, 2, 2);
            let lru = replay_policy_only(&t, &c, PolicyKind::Lru, None).unwrap();
            let sim = simulate(&t, &CacheConfig::fully_associative(PolicyKind::Lru, cap)).unwrap();
            prop_assert_eq!(lru.on_demand, sim.misses);
            let opt = replay_policy_only(&t, &c, PolicyKind::Optgen, None).unwrap();
            prop_assert_eq!(opt.hits(), simulate_optgen(&t, cap).unwrap().hits);
        }

        #[test]
        fn every_replay_partitions_and_respects_capacity(ids in proptest::collection::vec(0u64..24, 1..300), cap in 1usize..12, order in prop_oneof![Just(ScanOrder::GlobalId), Just(ScanOrder::LabelRecency)]) {
            let t = trace(&ids);
            let c = ReplayConfig { scan_order: order, ..cfg(cap, 4, 2, 2) };
            let oracle = OracleAdvisor::new(&t, cap.max(2), 2, 4).unwrap();
            let reports = [
                replay(&t, &c, &oracle, "oracle").unwrap(),
                replay(&t, &c, &NullAdvisor, "null").unwrap(),
                replay_policy_only(&t, &c, PolicyKind::Srrip, Some(&oracle)).unwrap(),
                replay_policy_only(&t, &c, PolicyKind::Optgen, Some(&oracle)).unwrap(),
            ];
            for r in reports {
                prop_assert_eq!(r.cache_hits + r.prefetch_hits + r.on_demand, ids.len());
                prop_assert!(r.max_occupancy <= cap);
                prop_assert!((0.0..=1.0).contains(&r.correctness()));
                prop_assert!((0.0..=1.0).contains(&r.coverage()));
            }
        }

        #[test]
        fn replay_is_deterministic(ids in proptest::collection::vec(0u64..24, 1..200), cap in 2usize..8) {
            let t = trace(&ids);
            let c = cfg(cap, 4, 2, 2);
            let o = OracleAdvisor::new(&t, cap, 2, 4).unwrap();
            prop_assert_eq!(replay(&t, &c, &o, "a").unwrap(), replay(&t, &c, &o, "a").unwrap());
        }
    }
}
