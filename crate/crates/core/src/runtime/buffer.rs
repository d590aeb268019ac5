use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_EVICTION_SPEED: u32 = 4;

/// Order in which the eviction scan visits entries, which decides ties
/// between equal priorities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    /// Ascending global id; the first minimum wins.
    GlobalId,
    /// Among equal priorities prefer entries whose last caching bit was 0,
    /// then the least recently touched, then the smaller id.
    #[default]
    LabelRecency,
}

impl fmt::Display for ScanOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanOrder::GlobalId => "global-id",
            ScanOrder::LabelRecency => "label-recency",
        })
    }
}

impl FromStr for ScanOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global-id" => Ok(ScanOrder::GlobalId),
            "label-recency" => Ok(ScanOrder::LabelRecency),
            other => Err(Error::InvalidConfig(format!("unknown scan order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub priority: u32,
    /// Inserted by a prefetch and not referenced since.
    pub prefetched: bool,
    /// Last caching bit applied to this entry.
    pub bit: bool,
    /// Logical time of the last reference or insertion.
    pub touched: u64,
}

/// Fixed-capacity buffer of embedding rows with decaying priorities.
#[derive(Debug, Clone)]
pub struct PriorityBuffer {
    capacity: usize,
    eviction_speed: u32,
    order: ScanOrder,
    entries: BTreeMap<u64, Entry>,
    clock: u64,
}

impl PriorityBuffer {
    pub fn new(capacity: usize, eviction_speed: u32, order: ScanOrder) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            eviction_speed,
            order,
            entries: BTreeMap::new(),
            clock: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eviction_speed(&self) -> u32 {
        self.eviction_speed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn entry(&self, id: u64) -> Option<&Entry> {
        self.entries.get(&id)
    }

    pub fn priority(&self, id: u64) -> Option<u32> {
        self.entries.get(&id).map(|e| e.priority)
    }

    /// `(id, priority)` in ascending id order.
    pub fn priorities(&self) -> Vec<(u64, u32)> {
        self.entries.iter().map(|(&k, e)| (k, e.priority)).collect()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Records a reference to a resident id. Returns whether the entry was an
    /// unreferenced prefetch, clearing that tag.
    pub fn touch(&mut self, id: u64) -> Option<bool> {
        let now = self.tick();
        self.entries.get_mut(&id).map(|e| {
            e.touched = now;
            std::mem::replace(&mut e.prefetched, false)
        })
    }

    /// Inserts an absent id, evicting first when full. Returns the victim.
    pub fn insert(&mut self, id: u64, priority: u32, prefetched: bool) -> Result<Option<u64>> {
        if let Some(e) = self.entries.get_mut(&id) {
            e.priority = priority;
            return Ok(None);
        }
        let victim = if self.is_full() { Some(self.populate()?) } else { None };
        let now = self.tick();
        self.entries.insert(
            id,
            Entry {
                priority,
                prefetched,
                bit: false,
                touched: now,
            },
        );
        debug_assert!(self.entries.len() <= self.capacity);
        Ok(victim)
    }

    /// Sets a resident entry's priority and caching bit; absent ids are
    /// ignored.
    pub fn set_priority(&mut self, id: u64, priority: u32, bit: bool) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.priority = priority;
            e.bit = bit;
        }
    }

    /// Selects the lowest-priority entry, ages every entry by one (floored
    /// at zero) and evicts the selection.
    pub fn populate(&mut self) -> Result<u64> {
        let victim = match self.order {
            ScanOrder::GlobalId => {
                let mut best: Option<(u64, u32)> = None;
                for (&k, e) in &self.entries {
                    if best.is_none_or(|(_, p)| e.priority < p) {
                        best = Some((k, e.priority));
                    }
                }
                best.map(|b| b.0)
            }
            ScanOrder::LabelRecency => self
                .entries
                .iter()
                .min_by_key(|(&k, e)| (e.priority, e.bit, e.touched, k))
                .map(|(&k, _)| k),
        }
        .ok_or(Error::EmptyBuffer)?;
        for e in self.entries.values_mut() {
            e.priority = e.priority.saturating_sub(1);
        }
        self.entries.remove(&victim);
        Ok(victim)
    }

    /// Model-driven placement for one served chunk: chunk ids get
    /// `bit + eviction_speed`, then each prefetch id is inserted (evicting as
    /// needed) with priority `eviction_speed`. Returns the evicted ids.
    pub fn load_embeddings(&mut self, chunk: &[u64], bits: &[bool], prefetch: &[u64]) -> Result<Vec<u64>> {
        if chunk.len() != bits.len() {
            return Err(Error::LengthMismatch {
                what: "chunk ids vs caching bits",
                left: chunk.len(),
                right: bits.len(),
            });
        }
        for (&id, &b) in chunk.iter().zip(bits) {
            self.set_priority(id, u32::from(b) + self.eviction_speed, b);
        }
        let mut evicted = Vec::new();
        for &p in prefetch {
            if let Some(v) = self.insert(p, self.eviction_speed, true)? {
                evicted.push(v);
            }
        }
        Ok(evicted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(order: ScanOrder) -> PriorityBuffer {
        PriorityBuffer::new(3, 4, order).unwrap()
    }

    fn filled(order: ScanOrder) -> PriorityBuffer {
        let mut b = buf(order);
        for id in [10, 20, 30] {
            b.insert(id, 4, false).unwrap();
        }
        b
    }

    #[test]
    fn chunk_priorities_follow_bits() {
        for order in [ScanOrder::GlobalId, ScanOrder::LabelRecency] {
            let mut b = filled(order);
            b.load_embeddings(&[10, 20, 30], &[true, false, true], &[]).unwrap();
            assert_eq!(b.priorities(), vec![(10, 5), (20, 4), (30, 5)]);
        }
    }

    #[test]
    fn populate_evicts_the_minimum_and_ages_the_rest() {
        for order in [ScanOrder::GlobalId, ScanOrder::LabelRecency] {
            let mut b = filled(order);
            b.load_embeddings(&[10, 20, 30], &[true, false, true], &[]).unwrap();
            assert_eq!(b.populate().unwrap(), 20);
            assert_eq!(b.priorities(), vec![(10, 4), (30, 4)]);
        }
    }

    #[test]
    fn zero_priorities_evict_smallest_id_in_id_order() {
        let mut b = buf(ScanOrder::GlobalId);
        for id in [7, 3, 9] {
            b.insert(id, 0, false).unwrap();
        }
        assert_eq!(b.populate().unwrap(), 3);
        assert_eq!(b.priorities(), vec![(7, 0), (9, 0)]);
    }

    #[test]
    fn recency_order_breaks_ties_by_bit_then_age() {
        let mut b = buf(ScanOrder::LabelRecency);
        for id in [7, 3, 9] {
            b.insert(id, 0, false).unwrap();
        }
        // 7 is oldest, but its bit says keep
        b.set_priority(7, 0, true);
        b.touch(3);
        assert_eq!(b.populate().unwrap(), 9);
    }

    #[test]
    fn single_entry_and_empty_buffer() {
        let mut b = buf(ScanOrder::GlobalId);
        assert!(matches!(b.populate(), Err(Error::EmptyBuffer)));
        b.insert(5, 2, false).unwrap();
        assert_eq!(b.populate().unwrap(), 5);
        assert!(b.is_empty());
    }

    #[test]
    fn resident_prefetch_resets_priority_without_eviction() {
        let mut b = filled(ScanOrder::GlobalId);
        b.set_priority(20, 5, true);
        let ev = b.load_embeddings(&[], &[], &[20]).unwrap();
        assert!(ev.is_empty());
        assert_eq!(b.priority(20), Some(4));
        assert_eq!(b.len(), 3);
        assert!(!b.entry(20).unwrap().prefetched);
    }

    #[test]
    fn new_prefetch_into_full_buffer_evicts_once() {
        let mut b = filled(ScanOrder::GlobalId);
        let ev = b.load_embeddings(&[], &[], &[99]).unwrap();
        assert_eq!(ev, vec![10]);
        assert_eq!(b.len(), 3);
        assert!(b.entry(99).unwrap().prefetched);
        assert_eq!(b.touch(99), Some(true));
        assert_eq!(b.touch(99), Some(false));
    }

    #[test]
    fn rejects_zero_capacity_and_bad_lengths() {
        assert!(PriorityBuffer::new(0, 4, ScanOrder::GlobalId).is_err());
        assert!(filled(ScanOrder::GlobalId).load_embeddings(&[10], &[], &[]).is_err());
    }
}
