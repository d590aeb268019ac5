use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use super::SimResult;
use crate::error::{Error, Result};
use crate::trace::Trace;

pub const BRUTE_FORCE_MAX_LEN: usize = 14;
pub const BRUTE_FORCE_MAX_CAPACITY: usize = 4;

const NEVER: usize = usize::MAX;

/// Position of the next reference to the same id, `usize::MAX` if none.
pub fn next_uses(ids: &[u64]) -> Vec<usize> {
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut next = vec![NEVER; ids.len()];
    for (i, &g) in ids.iter().enumerate().rev() {
        if let Some(j) = seen.insert(g, i) {
            next[i] = j;
        }
    }
    next
}

/// Fully associative Belady MIN.
pub fn simulate_optgen(trace: &Trace, capacity: usize) -> Result<SimResult> {
    if capacity == 0 {
        return Err(Error::InvalidConfig("optgen capacity must be >= 1".into()));
    }
    simulate_optgen_sets(trace, capacity, 1)
}

/// Belady MIN applied independently inside each of `sets` sets.
///
/// On a miss with a full set the resident block referenced farthest in the
/// future is evicted; blocks never referenced again count as farthest and
/// tie on the smaller global id.
pub(crate) fn simulate_optgen_sets(trace: &Trace, capacity: usize, sets: usize) -> Result<SimResult> {
    let ids = trace.global_ids();
    let next = next_uses(&ids);
    let ways = capacity / sets;
    // (next use, Reverse(id)); the maximum is the victim
    let mut order: Vec<BTreeSet<(usize, Reverse<u64>)>> = vec![BTreeSet::new(); sets];
    let mut key_of: Vec<HashMap<u64, usize>> = vec![HashMap::new(); sets];
    let mut hit = vec![false; ids.len()];

    for (i, &g) in ids.iter().enumerate() {
        let s = (g % sets as u64) as usize;
        if let Some(k) = key_of[s].get_mut(&g) {
            order[s].remove(&(*k, Reverse(g)));
            *k = next[i];
            order[s].insert((next[i], Reverse(g)));
            hit[i] = true;
            continue;
        }
        if key_of[s].len() >= ways {
            let (_, Reverse(victim)) = order[s].pop_last().expect("full set is non-empty");
            key_of[s].remove(&victim);
        }
        key_of[s].insert(g, next[i]);
        order[s].insert((next[i], Reverse(g)));
    }

    let keep = next.iter().map(|&n| n != NEVER && hit[n]).collect();
    Ok(SimResult::from_hits(hit, Some(keep)))
}

/// Exact maximum hit count over every eviction choice, by memoized
/// depth-first search. Only for tiny instances.
pub fn brute_force_optimal(trace: &Trace, capacity: usize) -> Result<usize> {
    if trace.len() > BRUTE_FORCE_MAX_LEN || capacity > BRUTE_FORCE_MAX_CAPACITY {
        return Err(Error::BoundExceeded(format!(
            "brute force accepts length <= {BRUTE_FORCE_MAX_LEN} and capacity <= {BRUTE_FORCE_MAX_CAPACITY}, got {} and {capacity}",
            trace.len()
        )));
    }
    if capacity == 0 {
        return Err(Error::InvalidConfig("capacity must be >= 1".into()));
    }
    let ids = trace.global_ids();
    let mut memo = HashMap::new();
    Ok(search(&ids, 0, Vec::new(), capacity, &mut memo))
}

fn search(ids: &[u64], pos: usize, resident: Vec<u64>, capacity: usize, memo: &mut HashMap<(usize, Vec<u64>), usize>) -> usize {
    if pos == ids.len() {
        return 0;
    }
    let key = (pos, resident);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let (_, resident) = &key;
    let g = ids[pos];
    let best = if resident.contains(&g) {
        1 + search(ids, pos + 1, resident.clone(), capacity, memo)
    } else if resident.len() < capacity {
        let mut r = resident.clone();
        r.push(g);
        r.sort_unstable();
        search(ids, pos + 1, r, capacity, memo)
    } else {
        (0..resident.len())
            .map(|victim| {
                let mut r = resident.clone();
                r[victim] = g;
                r.sort_unstable();
                search(ids, pos + 1, r, capacity, memo)
            })
            .max()
            .unwrap_or(0)
    };
    memo.insert(key, best);
    best
}
