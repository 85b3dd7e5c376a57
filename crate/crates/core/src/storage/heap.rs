//! Array-backed binary min-heap over `(value, id)`.
//!
//! Lower value sits nearer the root; equal values order by id so the older
//! buffer is evicted first.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeapEntry {
    pub value: f64,
    pub id: u64,
}

impl HeapEntry {
    fn precedes(&self, other: &HeapEntry) -> bool {
        match self.value.total_cmp(&other.value) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.id < other.id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinHeap {
    slots: Vec<HeapEntry>,
}

impl MinHeap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild from a stored array layout; `None` if it violates the heap order.
    pub fn from_layout(slots: Vec<HeapEntry>) -> Option<Self> {
        let h = MinHeap { slots };
        h.is_valid().then_some(h)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn peek(&self) -> Option<&HeapEntry> {
        self.slots.first()
    }

    pub fn as_slice(&self) -> &[HeapEntry] {
        &self.slots
    }

    pub fn push(&mut self, entry: HeapEntry) {
        self.slots.push(entry);
        let mut i = self.slots.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.slots[i].precedes(&self.slots[parent]) {
                break;
            }
            self.slots.swap(i, parent);
            i = parent;
        }
    }

    pub fn pop(&mut self) -> Option<HeapEntry> {
        if self.slots.is_empty() {
            return None;
        }
        let top = self.slots.swap_remove(0);
        let n = self.slots.len();
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < n && self.slots[l].precedes(&self.slots[m]) {
                m = l;
            }
            if r < n && self.slots[r].precedes(&self.slots[m]) {
                m = r;
            }
            if m == i {
                break;
            }
            self.slots.swap(i, m);
            i = m;
        }
        Some(top)
    }

    /// Full scan of the parent/child ordering.
    pub fn is_valid(&self) -> bool {
        (1..self.slots.len()).all(|i| !self.slots[i].precedes(&self.slots[(i - 1) / 2]))
    }
}
