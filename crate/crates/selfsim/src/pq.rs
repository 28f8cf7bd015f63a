//! Priority-queue entries with deterministic tie-breaking.
//!
//! Keys are `f64` regardless of the working scalar (ordering only; the
//! certified arithmetic stays in `T`). Ties are broken by insertion
//! sequence so heap order never depends on allocation details.

use ordered_float::OrderedFloat;
use std::cmp::{Ordering, Reverse};

/// Entry for a min-heap (smallest key pops first).
pub struct MinEntry<P> {
    key: Reverse<(OrderedFloat<f64>, u64)>,
    pub item: P,
}

impl<P> MinEntry<P> {
    pub fn new(key: f64, seq: u64, item: P) -> Self {
        MinEntry {
            key: Reverse((OrderedFloat(key), seq)),
            item,
        }
    }
}

/// Entry for a max-heap (largest key pops first; earlier insertions win ties).
pub struct MaxEntry<P> {
    key: (OrderedFloat<f64>, Reverse<u64>),
    pub item: P,
}

impl<P> MaxEntry<P> {
    pub fn new(key: f64, seq: u64, item: P) -> Self {
        MaxEntry {
            key: (OrderedFloat(key), Reverse(seq)),
            item,
        }
    }
}

macro_rules! impl_ord {
    ($name:ident) => {
        impl<P> PartialEq for $name<P> {
            fn eq(&self, other: &Self) -> bool {
                self.key == other.key
            }
        }
        impl<P> Eq for $name<P> {}
        impl<P> PartialOrd for $name<P> {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl<P> Ord for $name<P> {
            fn cmp(&self, other: &Self) -> Ordering {
                self.key.cmp(&other.key)
            }
        }
    };
}

impl_ord!(MinEntry);
impl_ord!(MaxEntry);

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    #[test]
    fn min_and_max_orderings() {
        let mut min: BinaryHeap<MinEntry<&str>> = BinaryHeap::new();
        min.push(MinEntry::new(2.0, 0, "b"));
        min.push(MinEntry::new(1.0, 1, "a"));
        min.push(MinEntry::new(1.0, 2, "a2"));
        assert_eq!(min.pop().unwrap().item, "a");
        assert_eq!(min.pop().unwrap().item, "a2");

        let mut max: BinaryHeap<MaxEntry<&str>> = BinaryHeap::new();
        max.push(MaxEntry::new(2.0, 0, "b"));
        max.push(MaxEntry::new(3.0, 1, "c"));
        max.push(MaxEntry::new(3.0, 2, "c2"));
        assert_eq!(max.pop().unwrap().item, "c");
        assert_eq!(max.pop().unwrap().item, "c2");
        assert_eq!(max.pop().unwrap().item, "b");
    }
}
