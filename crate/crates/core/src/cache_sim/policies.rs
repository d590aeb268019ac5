use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Replacement state of one cache set.
pub trait ReplacementPolicy: Send {
    fn contains(&self, id: u64) -> bool;
    /// Records a reference to a resident id.
    fn on_hit(&mut self, id: u64);
    /// Inserts an absent id, evicting one resident when the set is full.
    fn insert(&mut self, id: u64) -> Option<u64>;
    fn len(&self) -> usize;
    fn capacity(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct Lru {
    capacity: usize,
    clock: u64,
    stamps: HashMap<u64, u64>,
    order: BTreeMap<u64, u64>,
}

impl Lru {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            clock: 0,
            stamps: HashMap::with_capacity(capacity),
            order: BTreeMap::new(),
        }
    }

    fn stamp(&mut self, id: u64) {
        self.clock += 1;
        if let Some(old) = self.stamps.insert(id, self.clock) {
            self.order.remove(&old);
        }
        self.order.insert(self.clock, id);
    }
}

impl ReplacementPolicy for Lru {
    fn contains(&self, id: u64) -> bool {
        self.stamps.contains_key(&id)
    }

    fn on_hit(&mut self, id: u64) {
        self.stamp(id);
    }

    fn insert(&mut self, id: u64) -> Option<u64> {
        let victim = if self.stamps.len() >= self.capacity {
            let (_, v) = self.order.pop_first()?;
            self.stamps.remove(&v);
            Some(v)
        } else {
            None
        };
        self.stamp(id);
        victim
    }

    fn len(&self) -> usize {
        self.stamps.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }
}

/// In-cache LFU; frequency counters live only while the block is resident
/// and ties go to the least recently used block.
pub struct Lfu {
    capacity: usize,
    clock: u64,
    meta: HashMap<u64, (u64, u64)>,
    order: BTreeSet<(u64, u64, u64)>,
}

impl Lfu {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            clock: 0,
            meta: HashMap::with_capacity(capacity),
            order: BTreeSet::new(),
        }
    }
}

impl ReplacementPolicy for Lfu {
    fn contains(&self, id: u64) -> bool {
        self.meta.contains_key(&id)
    }

    fn on_hit(&mut self, id: u64) {
        self.clock += 1;
        if let Some(m) = self.meta.get_mut(&id) {
            self.order.remove(&(m.0, m.1, id));
            *m = (m.0 + 1, self.clock);
            self.order.insert((m.0, m.1, id));
        }
    }

    fn insert(&mut self, id: u64) -> Option<u64> {
        let victim = if self.meta.len() >= self.capacity {
            let (_, _, v) = self.order.pop_first()?;
            self.meta.remove(&v);
            Some(v)
        } else {
            None
        };
        self.clock += 1;
        self.meta.insert(id, (1, self.clock));
        self.order.insert((1, self.clock, id));
        victim
    }

    fn len(&self) -> usize {
        self.meta.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Static RRIP: insert at `max - 1`, promote to 0 on hit, evict the first
/// slot at `max`, ageing every block when none is there.
pub struct Srrip {
    capacity: usize,
    max_rrpv: u8,
    slots: Vec<(u64, u8)>,
    where_is: HashMap<u64, usize>,
}

impl Srrip {
    pub fn new(capacity: usize, max_rrpv: u8) -> Self {
        Self {
            capacity,
            max_rrpv,
            slots: Vec::with_capacity(capacity),
            where_is: HashMap::with_capacity(capacity),
        }
    }
}

impl ReplacementPolicy for Srrip {
    fn contains(&self, id: u64) -> bool {
        self.where_is.contains_key(&id)
    }

    fn on_hit(&mut self, id: u64) {
        if let Some(&s) = self.where_is.get(&id) {
            self.slots[s].1 = 0;
        }
    }

    fn insert(&mut self, id: u64) -> Option<u64> {
        let insert_rrpv = self.max_rrpv.saturating_sub(1);
        if self.slots.len() < self.capacity {
            self.where_is.insert(id, self.slots.len());
            self.slots.push((id, insert_rrpv));
            return None;
        }
        let slot = loop {
            if let Some(s) = self.slots.iter().position(|&(_, r)| r >= self.max_rrpv) {
                break s;
            }
            for (_, r) in self.slots.iter_mut() {
                *r += 1;
            }
        };
        let (victim, _) = self.slots[slot];
        self.where_is.remove(&victim);
        self.slots[slot] = (id, insert_rrpv);
        self.where_is.insert(id, slot);
        Some(victim)
    }

    fn len(&self) -> usize {
        self.slots.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }
}
