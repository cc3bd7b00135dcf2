//! Wire format and endpoint logic for one-bit congestion marking.
//!
//! The scheme multiplexes load reports from every router on a path onto a
//! single header bit. A router may mark a packet only when the packet's
//! remaining TTL and its IP identification field agree modulo the cycle
//! length `M` ([`is_markable`]). Because consecutive routers see TTLs that
//! differ by exactly one, at most one router on any path of at most `M`
//! hops is eligible for a given packet, and the source can recover *which*
//! router was eligible from the IPid it gets echoed back on the
//! acknowledgement ([`attribute_router`]).
//!
//! Eligible routers mark with a probability equal to their current load
//! factor, so the long-run marking frequency observed per router *is* that
//! router's load factor. [`TallyTable`] performs that frequency estimation
//! on the source side.

use rand::RngExt;

/// Default modulus for the TTL/IPid eligibility rule. Paths longer than
/// this are rare on real networks, and a power of two keeps residues
/// stable when the 16-bit IPid counter wraps.
pub const DEFAULT_SLOTS: u8 = 32;

/// Static protocol parameters shared by one source/path pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Modulus `M` of the eligibility rule; also the TTL cycle length.
    pub slots: u8,
    /// When set, the source pre-selects IPids so that *every* packet is
    /// markable by some router on the path, instead of letting IPids run
    /// sequentially (where only `hops` in every `slots` packets are
    /// markable by anyone).
    pub presignal: bool,
    /// Number of marking routers on the forward path.
    pub hops: u8,
}

impl ProtocolParams {
    /// Parameters for a path with `hops` marking routers, default modulus,
    /// pre-signalling off.
    pub fn new(hops: u8) -> Self {
        ProtocolParams {
            slots: DEFAULT_SLOTS,
            presignal: false,
            hops,
        }
    }

    /// TTL a source should put on outgoing packets: the smallest positive
    /// multiple of `slots` that covers the whole path, so the first router
    /// sees `TTL ≡ 0 (mod slots)`.
    pub fn initial_ttl(&self) -> u8 {
        let m = self.slots as u16;
        let h = self.hops.max(1) as u16;
        let cycles = h.div_ceil(m);
        (m * cycles).min(u8::MAX as u16) as u8
    }

    /// The IPid residue class (mod `slots`) that router `i` (1-based) may
    /// mark: the residue of the TTL it sees on arrival.
    pub fn residue_for_router(&self, router: u8) -> u16 {
        let m = self.slots as u16;
        let i = router as u16;
        // Router i sees arrival TTL ≡ M - (i - 1) (mod M).
        (m - (i - 1) % m) % m
    }
}

/// The header fields the marking scheme reads and writes.
///
/// `ipid` plays the role of the IP identification field, `ttl` the
/// time-to-live, and `marked` the single congestion bit. Acknowledgements
/// (`ack_of != None`) echo the congestion bit of the packet they
/// acknowledge and are never marked themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketHeader {
    /// IP identification field; wraps at 2^16.
    pub ipid: u16,
    /// Remaining time-to-live; each router decrements it by one.
    pub ttl: u8,
    /// Congestion bit. On data packets: set by a marking router. On
    /// acknowledgements: echo of the acknowledged packet's bit.
    pub marked: bool,
    /// `Some(ipid)` of the acknowledged data packet if this is an
    /// acknowledgement, `None` for data packets.
    pub ack_of: Option<u16>,
}

impl PacketHeader {
    /// Whether this is an acknowledgement header.
    #[inline]
    pub fn is_ack(&self) -> bool {
        self.ack_of.is_some()
    }
}

/// Eligibility rule: a router may mark a packet exactly when the TTL it
/// sees on arrival and the packet's IPid agree modulo `slots`.
#[inline]
pub fn is_markable(ttl: u8, ipid: u16, slots: u8) -> bool {
    let m = slots as u16;
    (ttl as u16) % m == ipid % m
}

/// Per-hop processing of a data packet: decide whether to mark, then
/// decrement the TTL.
///
/// `load_percent` is the router's current load factor in `[0, 100]` and is
/// used directly as the marking probability for eligible packets.
/// Acknowledgements and ineligible packets pass through unmarked (an
/// already-set bit is preserved). Returns `true` when this router set the
/// bit.
pub fn process_at_router<R: RngExt + ?Sized>(
    header: &mut PacketHeader,
    slots: u8,
    load_percent: f64,
    rng: &mut R,
) -> bool {
    let eligible = !header.is_ack() && is_markable(header.ttl, header.ipid, slots);
    let mut marked_here = false;
    if eligible {
        let p = (load_percent / 100.0).clamp(0.0, 1.0);
        if rng.random::<f64>() < p {
            marked_here = !header.marked;
            header.marked = true;
        }
    }
    header.ttl = header.ttl.saturating_sub(1);
    marked_here
}

/// Build the acknowledgement for a delivered data packet: echoes the
/// congestion bit and records which IPid it acknowledges. The ACK reuses
/// the data packet's IPid for its own header (it is never markable anyway,
/// since acknowledgements are excluded from marking).
pub fn make_ack(data: &PacketHeader, initial_ttl: u8) -> PacketHeader {
    PacketHeader {
        ipid: data.ipid,
        ttl: initial_ttl,
        marked: data.marked,
        ack_of: Some(data.ipid),
    }
}

/// Which router an echoed IPid designates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attribution {
    /// 1-based index of the designated router on the forward path.
    pub router: u8,
    /// `true` when several routers on the path share this residue (paths
    /// longer than `slots` hops); `router` is then the nearest candidate.
    pub ambiguous: bool,
}

/// Recover which router was eligible to mark a packet with this IPid, or
/// `None` if no router on the path was.
///
/// Inverts the eligibility rule: router `i` sees arrival TTL
/// `initial_ttl - (i - 1) ≡ -(i - 1) (mod slots)`, so the designated index
/// is `i = (slots - ipid mod slots) mod slots + 1`, extended by multiples
/// of `slots` for paths longer than one TTL cycle.
pub fn attribute_router(ipid: u16, params: &ProtocolParams) -> Option<Attribution> {
    let m = params.slots as u16;
    let h = params.hops as u16;
    let first = (m - ipid % m) % m + 1;
    if first > h {
        return None;
    }
    Some(Attribution {
        router: first as u8,
        ambiguous: first + m <= h,
    })
}

/// Source-side generator for outgoing data-packet headers.
///
/// In sequential mode the IPid runs through consecutive values, as an IP
/// stack's identification counter would, so each router is eligible for
/// one packet in every `slots`. With pre-signalling the source instead
/// walks the IPid through the `hops` eligible residues round-robin, making
/// every packet markable by some router and multiplying the per-router
/// sampling rate by `slots / hops`.
#[derive(Debug, Clone)]
pub struct HeaderSource {
    params: ProtocolParams,
    /// Packets emitted so far.
    seq: u64,
    /// IPid of the first sequential packet.
    start_ipid: u16,
}

impl HeaderSource {
    /// New source starting its IPid counter at `start_ipid` (sequential
    /// mode only; pre-signalling derives IPids from the residue cycle).
    pub fn new(params: ProtocolParams, start_ipid: u16) -> Self {
        HeaderSource {
            params,
            seq: 0,
            start_ipid,
        }
    }

    /// Header for the next outgoing data packet.
    pub fn next_header(&mut self) -> PacketHeader {
        let ipid = if self.params.presignal {
            let h = self.params.hops.max(1) as u64;
            let router = (self.seq % h) as u8 + 1;
            let round = self.seq / h;
            // Advance by one full cycle length per round: the residue is
            // preserved (slots is a power of two dividing 2^16) while the
            // raw IPid keeps moving like a real identification field.
            let base = self.params.residue_for_router(router);
            base.wrapping_add((round as u16).wrapping_mul(self.params.slots as u16))
        } else {
            self.start_ipid.wrapping_add(self.seq as u16)
        };
        self.seq += 1;
        PacketHeader {
            ipid,
            ttl: self.params.initial_ttl(),
            marked: false,
            ack_of: None,
        }
    }
}

/// One closed estimation period: per-router sample counts and the
/// resulting load estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedPeriod {
    /// Per-router count of eligible (markable) acknowledgements seen this
    /// period. Index 0 is router 1.
    pub markable: Vec<u64>,
    /// Per-router count of those that came back marked.
    pub marked: Vec<u64>,
    /// Per-router load estimate in percent: `100 · marked / markable`,
    /// carried forward from the previous period when a router had no
    /// eligible samples, `None` if it has had none since the start.
    pub estimates: Vec<Option<f64>>,
}

/// Source-side tally converting echoed marks into per-router load
/// estimates.
///
/// Feed every received acknowledgement to [`TallyTable::record_ack`]; at
/// each estimation-period boundary, [`TallyTable::close_period`] returns
/// the per-router marking frequencies as load-factor estimates and resets
/// the counters. Routers with no eligible samples in a period keep their
/// previous estimate (the source has learned nothing new about them).
#[derive(Debug, Clone)]
pub struct TallyTable {
    params: ProtocolParams,
    markable: Vec<u64>,
    marked: Vec<u64>,
    last_estimates: Vec<Option<f64>>,
}

impl TallyTable {
    /// Empty tally for a path described by `params`.
    pub fn new(params: ProtocolParams) -> Self {
        let n = params.hops as usize;
        TallyTable {
            params,
            markable: vec![0; n],
            marked: vec![0; n],
            last_estimates: vec![None; n],
        }
    }

    /// Account one received acknowledgement. Non-acknowledgement headers
    /// and IPids designating no router on the path are ignored. Returns
    /// the attribution used, if any.
    pub fn record_ack(&mut self, header: &PacketHeader) -> Option<Attribution> {
        let echoed = header.ack_of?;
        let attr = attribute_router(echoed, &self.params)?;
        let idx = attr.router as usize - 1;
        self.markable[idx] += 1;
        if header.marked {
            self.marked[idx] += 1;
        }
        Some(attr)
    }

    /// Close the current estimation period: compute per-router estimates,
    /// reset the counters, and remember the estimates for carry-forward.
    pub fn close_period(&mut self) -> ClosedPeriod {
        let n = self.params.hops as usize;
        let mut estimates = Vec::with_capacity(n);
        for i in 0..n {
            let est = if self.markable[i] > 0 {
                Some(100.0 * self.marked[i] as f64 / self.markable[i] as f64)
            } else {
                self.last_estimates[i]
            };
            estimates.push(est);
        }
        let period = ClosedPeriod {
            markable: std::mem::replace(&mut self.markable, vec![0; n]),
            marked: std::mem::replace(&mut self.marked, vec![0; n]),
            estimates: estimates.clone(),
        };
        self.last_estimates = estimates;
        period
    }
}
