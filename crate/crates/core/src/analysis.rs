//! Locality analytics: reuse distances, their log2 histogram, and the
//! access-frequency CDF.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseDistanceReport {
    /// `None` marks a cold (first) access.
    pub per_access: Vec<Option<u64>>,
    /// log2 bucket -> count. Bucket 0 holds distance 0, bucket `k >= 1`
    /// holds distances in `[2^(k-1), 2^k)`.
    pub histogram: BTreeMap<u32, u64>,
    pub cold_count: usize,
}

impl ReuseDistanceReport {
    /// Cumulative fraction of warm accesses per histogram bucket.
    pub fn histogram_cdf(&self) -> Vec<(u32, f64)> {
        let total: u64 = self.histogram.values().sum();
        let mut acc = 0u64;
        self.histogram
            .iter()
            .map(|(&b, &c)| {
                acc += c;
                (b, if total == 0 { 0.0 } else { acc as f64 / total as f64 })
            })
            .collect()
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bucket,lower,upper,count,cdf\n");
        for ((b, c), (_, cdf)) in self.histogram.iter().zip(self.histogram_cdf()) {
            let (lo, hi) = bucket_bounds(*b);
            let _ = writeln!(s, "{b},{lo},{hi},{c},{cdf:.6}");
        }
        s
    }
}

pub fn bucket_of(distance: u64) -> u32 {
    if distance == 0 {
        0
    } else {
        64 - distance.leading_zeros()
    }
}

/// Inclusive-exclusive distance range `[lo, hi)` of a bucket.
pub fn bucket_bounds(bucket: u32) -> (u64, u64) {
    match bucket {
        0 => (0, 1),
        b => (1u64 << (b - 1), 1u64.checked_shl(b).unwrap_or(u64::MAX)),
    }
}

struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, pos: usize, delta: i64) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `[0, pos)`.
    fn prefix(&self, pos: usize) -> i64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Distinct-id reuse distance of every access, in O(n log n).
///
/// A Fenwick tree holds a 1 at the latest position of every id; the reuse
/// distance of access `i` whose previous occurrence is at `p` is the number
/// of marks strictly between `p` and `i`.
pub fn reuse_distances(trace: &Trace) -> ReuseDistanceReport {
    let ids = trace.global_ids();
    let mut last: HashMap<u64, usize> = HashMap::new();
    let mut marks = Fenwick::new(ids.len());
    let mut per_access = Vec::with_capacity(ids.len());
    let mut histogram = BTreeMap::new();
    let mut cold_count = 0;
    for (i, &g) in ids.iter().enumerate() {
        match last.insert(g, i) {
            Some(p) => {
                let d = (marks.prefix(i) - marks.prefix(p + 1)) as u64;
                marks.add(p, -1);
                per_access.push(Some(d));
                *histogram.entry(bucket_of(d)).or_insert(0) += 1;
            }
            None => {
                cold_count += 1;
                per_access.push(None);
            }
        }
        marks.add(i, 1);
    }
    ReuseDistanceReport {
        per_access,
        histogram,
        cold_count,
    }
}

/// Points `(rank_fraction, access_fraction)` over ids sorted by descending
/// access count; the last point is `(1, 1)`.
pub fn frequency_cdf(trace: &Trace) -> Result<Vec<(f64, f64)>> {
    if trace.is_empty() {
        return Err(Error::Empty("frequency CDF of an empty trace"));
    }
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for a in trace.accesses() {
        *counts.entry(a.global_id).or_insert(0) += 1;
    }
    let mut sorted: Vec<(u64, u64)> = counts.into_iter().collect();
    // ties broken by id so the curve is deterministic
    sorted.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let (u, n) = (sorted.len() as f64, trace.len() as f64);
    let mut acc = 0u64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(k, &(_, c))| {
            acc += c;
            ((k + 1) as f64 / u, acc as f64 / n)
        })
        .collect())
}

/// Share of accesses that go to the top `fraction` of distinct ids.
pub fn top_share(cdf: &[(f64, f64)], fraction: f64) -> f64 {
    cdf.iter()
        .take_while(|(r, _)| *r <= fraction + 1e-12)
        .last()
        .map(|&(_, a)| a)
        .unwrap_or(0.0)
}

pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut s = String::from("rank_fraction,access_fraction\n");
    for (r, a) in cdf {
        let _ = writeln!(s, "{r:.6},{a:.6}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TableLayout;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn trace(ids: &[u64]) -> Trace {
        let n = ids.iter().copied().max().unwrap_or(0) + 1;
        Trace::from_global_ids(TableLayout::new(vec![n]).unwrap(), ids).unwrap()
    }

    /// Quadratic scan kept as the reference definition.
    fn naive(ids: &[u64]) -> Vec<Option<u64>> {
        (0..ids.len())
            .map(|i| {
                let p = (0..i).rev().find(|&j| ids[j] == ids[i])?;
                Some(ids[p + 1..i].iter().collect::<HashSet<_>>().len() as u64)
            })
            .collect()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(reuse_distances(&trace(&[5, 7, 5])).per_access, vec![None, None, Some(1)]);
        assert_eq!(reuse_distances(&trace(&[5, 5])).per_access, vec![None, Some(0)]);
        assert_eq!(
            reuse_distances(&trace(&[0, 1, 2, 0, 1, 2])).per_access,
            vec![None, None, None, Some(2), Some(2), Some(2)]
        );
    }

    #[test]
    fn frequency_cdf_examples() {
        let cdf = frequency_cdf(&trace(&[0, 0, 0, 1])).unwrap();
        assert_eq!(cdf, vec![(0.5, 0.75), (1.0, 1.0)]);

        let cdf = frequency_cdf(&trace(&[0, 1, 2, 3, 3, 2, 1, 0])).unwrap();
        for (r, a) in cdf {
            assert!((r - a).abs() <= 1.0 / 8.0 + 1e-12);
        }
        assert!(frequency_cdf(&trace(&[])).is_err());
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket_of(0), 0);
        assert_eq!(bucket_of(1), 1);
        assert_eq!(bucket_of(3), 2);
        assert_eq!(bucket_of(4), 3);
        for d in [0u64, 1, 2, 5, 1000] {
            let (lo, hi) = bucket_bounds(bucket_of(d));
            assert!(lo <= d && d < hi);
        }
    }

    proptest! {
        #[test]
        fn matches_naive_scan(ids in proptest::collection::vec(0u64..12, 0..200)) {
            let r = reuse_distances(&trace(&ids));
            prop_assert_eq!(&r.per_access, &naive(&ids));
            let t = trace(&ids);
            prop_assert_eq!(r.cold_count, t.unique_count());
            let warm: u64 = r.histogram.values().sum();
            prop_assert_eq!(warm as usize, ids.len() - r.cold_count);
        }

        #[test]
        fn relabeling_ids_preserves_distances(ids in proptest::collection::vec(0u64..10, 1..120), shift in 1u64..50) {
            // i -> (i * 7 + shift) mod 97 is injective on 0..10
            let mapped: Vec<u64> = ids.iter().map(|&i| (i * 7 + shift) % 97).collect();
            let mut a = reuse_distances(&trace(&ids)).per_access;
            let mut b = reuse_distances(&trace(&mapped)).per_access;
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cdf_is_monotone_and_ends_at_one(ids in proptest::collection::vec(0u64..30, 1..300)) {
            let cdf = frequency_cdf(&trace(&ids)).unwrap();
            for w in cdf.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
            let last = *cdf.last().unwrap();
            prop_assert!((last.0 - 1.0).abs() < 1e-12 && (last.1 - 1.0).abs() < 1e-12);
            // descending-frequency order makes the curve lie on or above the diagonal
            for (r, a) in cdf {
                prop_assert!(a + 1e-12 >= r);
            }
        }
    }
}
