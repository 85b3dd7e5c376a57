//! Capacity-bounded long-term buffer store.
//!
//! The priority policy keeps buffers in a min-heap on buffer value and evicts
//! from the bottom; an incoming buffer that cannot displace enough
//! lower-valued buffers is rejected and the store is left untouched. The FIFO
//! policy drops the oldest buffers until the newcomer fits.

mod heap;
mod persist;
mod query;

pub use heap::{HeapEntry, MinHeap};
pub use persist::{load, persist, INDEX_FILE, INDEX_SCHEMA, MANIFEST_FILE, MANIFEST_SCHEMA};
pub use query::{Cmp, TagPredicate};

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::buffering::{BufferTag, FrameBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Priority,
    Fifo,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "priority" => Ok(Policy::Priority),
            "fifo" => Ok(Policy::Fifo),
            _ => Err(Error::param(format!("unknown storage policy '{s}'"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Priority => "priority",
            Policy::Fifo => "fifo",
        })
    }
}

/// A buffer as held by the store, with encoded frame payloads in real-pixel
/// mode (empty vectors in modeled mode or for discarded frames).
#[derive(Debug, Clone, PartialEq)]
pub struct StoredBuffer {
    pub buffer: FrameBuffer,
    pub payloads: Vec<Vec<u8>>,
}

impl StoredBuffer {
    pub fn modeled(buffer: FrameBuffer) -> Self {
        StoredBuffer {
            buffer,
            payloads: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.buffer.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvictionReason {
    /// Removed from the heap bottom to admit a higher-valued buffer.
    Displaced { by: u64 },
    /// Oldest buffer dropped by the FIFO policy.
    Overwritten { by: u64 },
    /// Incoming buffer could not displace enough lower-valued buffers.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvictionEntry {
    pub buffer_id: u64,
    pub value: f64,
    pub cost: f64,
    pub reason: EvictionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Stored,
    StoredAfterEvicting(Vec<u64>),
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageState {
    policy: Policy,
    capacity: Option<f64>,
    entries: BTreeMap<u64, StoredBuffer>,
    heap: MinHeap,
    arrivals: VecDeque<u64>,
    total_cost: f64,
    eviction_log: Vec<EvictionEntry>,
}

impl StorageState {
    /// `capacity = None` means unlimited.
    pub fn new(policy: Policy, capacity: Option<f64>) -> Result<Self> {
        if let Some(m) = capacity {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::param(format!("storage capacity must be positive, got {m}")));
            }
        }
        Ok(StorageState {
            policy,
            capacity,
            entries: BTreeMap::new(),
            heap: MinHeap::new(),
            arrivals: VecDeque::new(),
            total_cost: 0.0,
            eviction_log: Vec::new(),
        })
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }
    pub fn capacity(&self) -> Option<f64> {
        self.capacity
    }
    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn eviction_log(&self) -> &[EvictionEntry] {
        &self.eviction_log
    }
    pub fn get(&self, id: u64) -> Option<&StoredBuffer> {
        self.entries.get(&id)
    }
    pub fn contains(&self, id: u64) -> bool {
        self.entries.contains_key(&id)
    }
    /// Stored buffers in id order.
    pub fn buffers(&self) -> impl Iterator<Item = &StoredBuffer> {
        self.entries.values()
    }
    pub fn heap(&self) -> &MinHeap {
        &self.heap
    }
    /// FIFO arrival order of stored ids (empty under the priority policy).
    pub fn arrivals(&self) -> &VecDeque<u64> {
        &self.arrivals
    }

    /// Lowest-valued stored buffer under the priority policy.
    pub fn min_entry(&self) -> Option<HeapEntry> {
        self.heap.peek().copied()
    }

    fn fits(&self, cost: f64) -> bool {
        self.capacity.is_none_or(|m| self.total_cost + cost <= m)
    }

    fn remove(&mut self, id: u64) -> StoredBuffer {
        let b = self.entries.remove(&id).expect("indexed buffer is stored");
        self.total_cost -= b.buffer.cost;
        if self.entries.is_empty() {
            self.total_cost = 0.0;
        }
        b
    }

    pub fn insert_buffer(&mut self, incoming: StoredBuffer) -> Result<InsertOutcome> {
        let id = incoming.id();
        let value = incoming.buffer.value;
        let cost = incoming.buffer.cost;
        if let Some(m) = self.capacity {
            if cost > m {
                return Err(Error::ExceedsCapacity {
                    buffer_id: id,
                    cost,
                    capacity: m,
                });
            }
        }
        if self.entries.contains_key(&id) {
            return Err(Error::param(format!("buffer {id} is already stored")));
        }

        let mut evicted = Vec::new();
        match self.policy {
            Policy::Priority => {
                let mut victims = Vec::new();
                let mut freed = 0.0;
                while self.capacity.is_some_and(|m| self.total_cost - freed + cost > m) {
                    match self.heap.peek() {
                        Some(min) if min.value < value => {
                            let min = self.heap.pop().expect("peeked");
                            freed += self.entries[&min.id].buffer.cost;
                            victims.push(min);
                        }
                        _ => {
                            for v in victims {
                                self.heap.push(v);
                            }
                            self.eviction_log.push(EvictionEntry {
                                buffer_id: id,
                                value,
                                cost,
                                reason: EvictionReason::Rejected,
                            });
                            return Ok(InsertOutcome::Rejected);
                        }
                    }
                }
                for v in victims {
                    let b = self.remove(v.id);
                    self.eviction_log.push(EvictionEntry {
                        buffer_id: v.id,
                        value: v.value,
                        cost: b.buffer.cost,
                        reason: EvictionReason::Displaced { by: id },
                    });
                    evicted.push(v.id);
                }
                self.heap.push(HeapEntry { value, id });
            }
            Policy::Fifo => {
                while !self.fits(cost) {
                    let oldest = self.arrivals.pop_front().expect("over capacity implies a stored buffer");
                    let b = self.remove(oldest);
                    self.eviction_log.push(EvictionEntry {
                        buffer_id: oldest,
                        value: b.buffer.value,
                        cost: b.buffer.cost,
                        reason: EvictionReason::Overwritten { by: id },
                    });
                    evicted.push(oldest);
                }
                self.arrivals.push_back(id);
            }
        }
        self.total_cost += cost;
        self.entries.insert(id, incoming);
        Ok(if evicted.is_empty() {
            InsertOutcome::Stored
        } else {
            InsertOutcome::StoredAfterEvicting(evicted)
        })
    }

    /// Ids of stored buffers whose tags satisfy `pred`, highest value first.
    pub fn query_tags(&self, pred: impl Fn(&BufferTag) -> bool) -> Vec<u64> {
        let mut hits: Vec<(f64, u64)> = self
            .entries
            .values()
            .filter(|b| pred(&b.buffer.tags))
            .map(|b| (b.buffer.value, b.id()))
            .collect();
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        hits.into_iter().map(|(_, id)| id).collect()
    }

    pub(crate) fn from_parts(
        policy: Policy,
        capacity: Option<f64>,
        entries: BTreeMap<u64, StoredBuffer>,
        order: Vec<u64>,
        total_cost: f64,
        eviction_log: Vec<EvictionEntry>,
    ) -> Result<Self> {
        let mut s = StorageState::new(policy, capacity)?;
        if order.len() != entries.len() || order.iter().any(|id| !entries.contains_key(id)) {
            return Err(Error::param("store order does not match stored buffers"));
        }
        match policy {
            Policy::Priority => {
                let slots = order
                    .iter()
                    .map(|id| HeapEntry {
                        value: entries[id].buffer.value,
                        id: *id,
                    })
                    .collect();
                s.heap = MinHeap::from_layout(slots).ok_or_else(|| Error::param("stored heap order is invalid"))?;
            }
            Policy::Fifo => s.arrivals = order.into(),
        }
        s.entries = entries;
        s.total_cost = total_cost;
        s.eviction_log = eviction_log;
        Ok(s)
    }

    /// Heap layout (priority) or arrival order (FIFO).
    pub(crate) fn order(&self) -> Vec<u64> {
        match self.policy {
            Policy::Priority => self.heap.as_slice().iter().map(|e| e.id).collect(),
            Policy::Fifo => self.arrivals.iter().copied().collect(),
        }
    }
}
