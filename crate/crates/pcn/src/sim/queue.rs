//! FIFO drop-tail queue with single-server semantics for one directed
//! link.
//!
//! A link serves one packet at a time at a fixed per-packet rate; packets
//! beyond the waiting-buffer limit are dropped and counted. The counters
//! satisfy, at every instant,
//!
//! ```text
//! enqueued = dequeued + dropped + backlog (waiting + in service)
//! ```
//!
//! which end-of-run accounting checks verbatim.

use std::collections::VecDeque;

use super::event::Packet;

/// What happened to a packet offered to the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Offer {
    /// The link was idle; the packet went straight into service.
    StartService,
    /// The packet joined the waiting buffer.
    Queued,
    /// The buffer was full; the packet was discarded.
    Dropped,
}

#[derive(Debug)]
pub(crate) struct LinkQueue {
    limit: usize,
    waiting: VecDeque<Packet>,
    in_service: Option<Packet>,
    enqueued: u64,
    dequeued: u64,
    dropped: u64,
}

impl LinkQueue {
    /// Queue with room for `limit` waiting packets (the packet in service
    /// does not count against the buffer).
    pub fn new(limit: usize) -> Self {
        LinkQueue {
            limit,
            waiting: VecDeque::new(),
            in_service: None,
            enqueued: 0,
            dequeued: 0,
            dropped: 0,
        }
    }

    /// Offer a packet to the link. Every offer counts as enqueued, even
    /// those the full buffer rejects, so the conservation identity closes.
    pub fn offer(&mut self, packet: Packet) -> Offer {
        self.enqueued += 1;
        if self.in_service.is_none() {
            self.in_service = Some(packet);
            Offer::StartService
        } else if self.waiting.len() < self.limit {
            self.waiting.push_back(packet);
            Offer::Queued
        } else {
            self.dropped += 1;
            Offer::Dropped
        }
    }

    /// Finish serving the current packet. Returns it together with `true`
    /// when the next waiting packet immediately entered service.
    pub fn complete(&mut self) -> (Packet, bool) {
        let done = self
            .in_service
            .take()
            .expect("completion fired on an idle link");
        self.dequeued += 1;
        match self.waiting.pop_front() {
            Some(next) => {
                self.in_service = Some(next);
                (done, true)
            }
            None => (done, false),
        }
    }

    /// Number of packets waiting (excludes the one in service); this is
    /// the instantaneous queue length the persistent-queue filter samples.
    pub fn backlog(&self) -> usize {
        self.waiting.len()
    }

    /// Packets still held by the link: waiting plus in service.
    pub fn residual(&self) -> u64 {
        self.waiting.len() as u64 + u64::from(self.in_service.is_some())
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }
    pub fn dequeued(&self) -> u64 {
        self.dequeued
    }
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
