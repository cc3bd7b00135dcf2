//! Time-ordered event queue and the packet unit that moves through it.

use std::collections::BinaryHeap;

use crate::protocol::PacketHeader;

/// Which flow a packet belongs to and which way it is going.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FlowRef {
    /// Probe flow traffic; `reverse` marks acknowledgements travelling
    /// back to the probe source.
    Probe { idx: usize, reverse: bool },
    /// Open-loop background traffic (one-way, no acknowledgements).
    Background { idx: usize },
}

/// A packet in flight. `hop` indexes the node the packet is currently at
/// (or heading to while queued/in flight) within its flow's path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Packet {
    pub flow: FlowRef,
    pub hop: usize,
    /// Marking-protocol header; background packets carry none.
    pub header: Option<PacketHeader>,
}

/// Everything that can happen at a point in simulated time.
#[derive(Debug)]
pub(crate) enum EventKind {
    /// A flow emits its next packet at its source node.
    Emit { flow: usize },
    /// A directed link finishes serialising the packet in service.
    LinkDone { link: usize },
    /// A packet arrives at a node after crossing a link.
    Arrive { packet: Packet },
    /// Periodic queue-length sampling tick feeding the persistent-queue
    /// filters (tick number `index`).
    SampleTick { index: u64 },
    /// A load-factor measurement window closes on every link.
    WindowTick { index: u64 },
    /// An estimation period closes at every probe source.
    PeriodTick { index: u64 },
}

impl EventKind {
    /// Processing priority at equal timestamps. Packet motion settles
    /// first so a queue sample taken exactly on a boundary sees it, the
    /// samples feed the window that closes at that same instant, and a
    /// period closing there counts every acknowledgement up to and
    /// including the boundary.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Emit { .. } | EventKind::LinkDone { .. } | EventKind::Arrive { .. } => 0,
            EventKind::SampleTick { .. } => 1,
            EventKind::WindowTick { .. } => 2,
            EventKind::PeriodTick { .. } => 3,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Event {
    pub time: f64,
    /// Insertion sequence number; ties in time are processed in insertion
    /// order so runs are exactly reproducible.
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the std max-heap pops the earliest event first;
        // ties break by kind rank, then by insertion order.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-heap of pending events with deterministic tie-breaking.
#[derive(Debug, Default)]
pub(crate) struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite() && time >= 0.0);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(i: u64) -> EventKind {
        EventKind::SampleTick { index: i }
    }

    #[test]
    fn pops_in_time_order() {
        let mut q = EventQueue::new();
        q.push(3.0, tick(3));
        q.push(1.0, tick(1));
        q.push(2.0, tick(2));
        let order: Vec<f64> = std::iter::from_fn(|| q.pop()).map(|e| e.time).collect();
        assert_eq!(order, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn simultaneous_events_keep_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..50u64 {
            q.push(7.5, tick(i));
        }
        let mut seen = Vec::new();
        while let Some(e) = q.pop() {
            match e.kind {
                EventKind::SampleTick { index } => seen.push(index),
                _ => unreachable!(),
            }
        }
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn interleaves_times_and_sequence() {
        let mut q = EventQueue::new();
        q.push(1.0, tick(0));
        q.push(0.5, tick(1));
        q.push(1.0, tick(2));
        q.push(0.25, tick(3));
        let order: Vec<(f64, u64)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.seq))
            .collect();
        assert_eq!(order, vec![(0.25, 3), (0.5, 1), (1.0, 0), (1.0, 2)]);
    }

    #[test]
    fn coincident_events_order_by_kind_then_insertion() {
        // Push in deliberately scrambled order at one timestamp; packet
        // motion must settle before sampling, sampling before the window
        // close, and the window close before the period close.
        let mut q = EventQueue::new();
        q.push(2.0, EventKind::PeriodTick { index: 9 });
        q.push(2.0, EventKind::WindowTick { index: 8 });
        q.push(2.0, tick(7));
        q.push(2.0, EventKind::Emit { flow: 0 });
        q.push(2.0, EventKind::LinkDone { link: 1 });
        let kinds: Vec<u8> = std::iter::from_fn(|| q.pop())
            .map(|e| e.kind.rank())
            .collect();
        assert_eq!(kinds, vec![0, 0, 1, 2, 3]);

        // Equal rank still resolves by insertion order.
        let mut q = EventQueue::new();
        q.push(2.0, EventKind::Emit { flow: 5 });
        q.push(2.0, EventKind::Emit { flow: 6 });
        let flows: Vec<usize> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::Emit { flow } => flow,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(flows, vec![5, 6]);
    }
}
