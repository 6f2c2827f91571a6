use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimTime;

struct Scheduled<E> {
    time: SimTime,
    class: u8,
    order: u64,
    event: E,
}

impl<E> Scheduled<E> {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.time, self.class, self.order)
    }
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Min-queue ordered by time, then class, then insertion order.
pub(crate) struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    inserted: u64,
}

impl<E> EventQueue<E> {
    pub(crate) fn new() -> Self {
        EventQueue { heap: BinaryHeap::new(), inserted: 0 }
    }

    pub(crate) fn push(&mut self, time: SimTime, class: u8, event: E) {
        self.heap.push(Scheduled { time, class, order: self.inserted, event });
        self.inserted += 1;
    }

    pub(crate) fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|s| s.time)
    }

    pub(crate) fn pop(&mut self) -> Option<(SimTime, E)> {
        self.heap.pop().map(|s| (s.time, s.event))
    }
}
