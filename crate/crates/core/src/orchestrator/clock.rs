use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Discrete-event clock. Events at equal times fire in insertion order.
#[derive(Debug, Clone)]
pub struct VirtualClock<E> {
    now: u64,
    seq: u64,
    pending: BinaryHeap<Reverse<(u64, u64, Slot<E>)>>,
}

// wrapper so the payload never takes part in ordering
#[derive(Debug, Clone)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        VirtualClock { now: 0, seq: 0, pending: BinaryHeap::new() }
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Schedules `event` at `at`; times in the past are clamped to now.
    pub fn schedule(&mut self, at: u64, event: E) {
        let at = at.max(self.now);
        self.pending.push(Reverse((at, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.pending.peek().map(|Reverse((t, _, _))| *t)
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse((t, _, Slot(e))) = self.pending.pop()?;
        self.now = t;
        Some((t, e))
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}
