//! The discrete-event engine: drives packets through the configured
//! topology and produces the run artifacts.
//!
//! # Mechanics
//!
//! Links are store-and-forward with size-independent service: a packet
//! occupies the transmitter for `1 / capacity` seconds, then spends the
//! propagation delay on the wire. Each directed link has a FIFO drop-tail
//! buffer whose limit counts waiting packets only. Probe flows emit at
//! fixed spacing and run the marking protocol: intermediate routers
//! decide markability against the arrival TTL, mark eligible packets with
//! probability equal to the outbound link's load factor (as of the last
//! completed measurement window), and decrement the TTL. Destinations
//! acknowledge every probe packet immediately, echoing the mark and the
//! identification field; acknowledgements travel the reverse path and are
//! never marked themselves. Background flows are open-loop one-way
//! packet streams with no headers and no acknowledgements.
//!
//! # Determinism
//!
//! All randomness comes from named substreams of the master seed: one per
//! flow (`flow:<name>`) and one per directed link for marking decisions
//! (`mark:<link-id>`). Events at equal timestamps process in a fixed
//! kind order (packet motion, queue samples, window closes, period
//! closes) and then in insertion order, so a scenario and seed fully
//! determine every artifact byte.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::artifacts::{
    AccountingRow, AckRow, EstimateRow, GroundTruthRow, PathRow, RunResult,
};
use super::config::{ArrivalSpec, SimConfig};
use super::event::{EventKind, EventQueue, FlowRef, Packet};
use super::queue::{LinkQueue, Offer};
use super::trace::{load_trace, ArrivalSampler};
use crate::forecast::ForecastState;
use crate::loadfactor::LinkLoadTracker;
use crate::protocol::{make_ack, process_at_router, HeaderSource, ProtocolParams, TallyTable};
use crate::Result;

/// Slack when comparing event times against the horizon, so ticks whose
/// k·interval product lands a few ulps past `duration` still fire.
const TIME_EPS: f64 = 1e-9;

struct LinkState {
    queue: LinkQueue,
    tracker: LinkLoadTracker,
    mark_rng: ChaCha8Rng,
    capacity: f64,
    delay: f64,
}

struct ProbeState {
    params: ProtocolParams,
    headers: HeaderSource,
    tally: TallyTable,
    /// One live forecaster per router on the path.
    forecasters: Vec<ForecastState>,
    /// Data packets emitted so far; emission `k` happens at `k / rate`.
    emitted: u64,
    rate: f64,
    forward: Vec<usize>,
    reverse: Vec<usize>,
}

struct BackgroundState {
    sampler: ArrivalSampler,
    path: Vec<usize>,
}

struct Engine<'a> {
    config: &'a SimConfig,
    now: f64,
    links: Vec<LinkState>,
    probes: Vec<ProbeState>,
    backgrounds: Vec<BackgroundState>,
    events: EventQueue,
    result: RunResult,
}

/// Simulate `config` under `seed` and return all artifacts in memory.
pub fn run(config: &SimConfig, seed: u64) -> Result<RunResult> {
    let mut engine = Engine::new(config, seed)?;
    engine.prime();
    engine.drive();
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, seed: u64) -> Result<Self> {
        let links = config
            .links
            .iter()
            .map(|l| LinkState {
                queue: LinkQueue::new(l.queue_limit),
                tracker: LinkLoadTracker::new(l.capacity, config.load),
                mark_rng: super::derive_rng(seed, &format!("mark:{}", l.id)),
                capacity: l.capacity,
                delay: l.delay,
            })
            .collect();

        let mut probes = Vec::with_capacity(config.probes.len());
        let mut paths = Vec::new();
        for p in &config.probes {
            let params = config.protocol_params(p);
            let mut rng = super::derive_rng(seed, &format!("flow:{}", p.name));
            let start_ipid: u16 = rng.random();
            for i in 1..=params.hops {
                let from = p.path[i as usize];
                let to = p.path[i as usize + 1];
                let link = config.link_between(from, to).expect("path uses links");
                paths.push(PathRow {
                    source_id: p.name.clone(),
                    router_index: i,
                    link_id: config.links[link].id.clone(),
                });
            }
            probes.push(ProbeState {
                params,
                headers: HeaderSource::new(params, start_ipid),
                tally: TallyTable::new(params),
                forecasters: vec![ForecastState::new(config.live_theta); params.hops as usize],
                emitted: 0,
                rate: p.rate,
                forward: p.path.clone(),
                reverse: p.path.iter().rev().copied().collect(),
            });
        }

        let mut backgrounds = Vec::with_capacity(config.backgrounds.len());
        for b in &config.backgrounds {
            let sampler = match &b.arrivals {
                ArrivalSpec::Trace(path) => ArrivalSampler::from_trace(load_trace(path)?),
                ArrivalSpec::Synthetic(model) => ArrivalSampler::synthetic(
                    *model,
                    super::derive_rng(seed, &format!("flow:{}", b.name)),
                )?,
            };
            backgrounds.push(BackgroundState {
                sampler,
                path: b.path.clone(),
            });
        }

        Ok(Engine {
            config,
            now: 0.0,
            links,
            probes,
            backgrounds,
            events: EventQueue::new(),
            result: RunResult {
                paths,
                ..RunResult::default()
            },
        })
    }

    fn horizon(&self, t: f64) -> bool {
        t <= self.config.duration + TIME_EPS
    }

    /// Schedule the first occurrence of everything.
    fn prime(&mut self) {
        for idx in 0..self.probes.len() {
            let t = 1.0 / self.probes[idx].rate;
            if self.horizon(t) {
                self.events.push(t, EventKind::Emit { flow: idx });
            }
        }
        let n_probes = self.probes.len();
        for idx in 0..self.backgrounds.len() {
            if let Some(t) = self.backgrounds[idx].sampler.next_time() {
                if self.horizon(t) {
                    self.events.push(t, EventKind::Emit { flow: n_probes + idx });
                }
            }
        }
        let load = &self.config.load;
        self.events
            .push(load.sample_interval, EventKind::SampleTick { index: 1 });
        self.events.push(load.window, EventKind::WindowTick { index: 1 });
        self.events
            .push(self.config.period, EventKind::PeriodTick { index: 1 });
    }

    fn drive(&mut self) {
        while let Some(event) = self.events.pop() {
            // Events pop in time order; the first one past the horizon
            // means everything left is too.
            if !self.horizon(event.time) {
                break;
            }
            self.now = event.time;
            match event.kind {
                EventKind::Emit { flow } => self.handle_emit(flow),
                EventKind::LinkDone { link } => self.handle_link_done(link),
                EventKind::Arrive { packet } => self.handle_arrive(packet),
                EventKind::SampleTick { index } => self.handle_sample(index),
                EventKind::WindowTick { index } => self.handle_window(index),
                EventKind::PeriodTick { index } => self.handle_period(index),
            }
        }
    }

    fn finish(mut self) -> RunResult {
        for (idx, link) in self.links.iter().enumerate() {
            let q = &link.queue;
            debug_assert_eq!(
                q.enqueued(),
                q.dequeued() + q.dropped() + q.residual(),
                "conservation violated on {}",
                self.config.links[idx].id
            );
            self.result.accounting.push(AccountingRow {
                link_id: self.config.links[idx].id.clone(),
                enqueued: q.enqueued(),
                dequeued: q.dequeued(),
                dropped: q.dropped(),
                queued_end: q.residual(),
            });
        }
        self.result
    }

    fn path_nodes(&self, flow: FlowRef, hop: usize) -> (usize, usize, usize) {
        let path: &[usize] = match flow {
            FlowRef::Probe { idx, reverse } => {
                if reverse {
                    &self.probes[idx].reverse
                } else {
                    &self.probes[idx].forward
                }
            }
            FlowRef::Background { idx } => &self.backgrounds[idx].path,
        };
        let next = if hop + 1 < path.len() { path[hop + 1] } else { usize::MAX };
        (path[hop - 1], path[hop], next)
    }

    fn path_len(&self, flow: FlowRef) -> usize {
        match flow {
            FlowRef::Probe { idx, .. } => self.probes[idx].forward.len(),
            FlowRef::Background { idx } => self.backgrounds[idx].path.len(),
        }
    }

    /// Offer a packet to the link leading to `path[packet.hop]`.
    fn offer(&mut self, packet: Packet) {
        let (from, to, _) = self.path_nodes(packet.flow, packet.hop);
        let link_idx = self
            .config
            .link_between(from, to)
            .expect("routes only use declared links");
        let link = &mut self.links[link_idx];
        link.tracker.record_offered();
        match link.queue.offer(packet) {
            Offer::StartService => {
                let done = self.now + 1.0 / link.capacity;
                self.events.push(done, EventKind::LinkDone { link: link_idx });
            }
            Offer::Queued | Offer::Dropped => {}
        }
    }

    fn handle_emit(&mut self, flow: usize) {
        if flow < self.probes.len() {
            let probe = &mut self.probes[flow];
            let header = probe.headers.next_header();
            probe.emitted += 1;
            let next_t = (probe.emitted + 1) as f64 / probe.rate;
            if self.horizon(next_t) {
                self.events.push(next_t, EventKind::Emit { flow });
            }
            self.offer(Packet {
                flow: FlowRef::Probe {
                    idx: flow,
                    reverse: false,
                },
                hop: 1,
                header: Some(header),
            });
        } else {
            let idx = flow - self.probes.len();
            let packet = Packet {
                flow: FlowRef::Background { idx },
                hop: 1,
                header: None,
            };
            if let Some(t) = self.backgrounds[idx].sampler.next_time() {
                if self.horizon(t) {
                    self.events.push(t, EventKind::Emit { flow });
                }
            }
            self.offer(packet);
        }
    }

    fn handle_link_done(&mut self, link_idx: usize) {
        let link = &mut self.links[link_idx];
        let (packet, has_more) = link.queue.complete();
        if has_more {
            let done = self.now + 1.0 / link.capacity;
            self.events.push(done, EventKind::LinkDone { link: link_idx });
        }
        let arrive = self.now + link.delay;
        self.events.push(arrive, EventKind::Arrive { packet });
    }

    fn handle_arrive(&mut self, mut packet: Packet) {
        let at_destination = packet.hop == self.path_len(packet.flow) - 1;
        match packet.flow {
            FlowRef::Background { .. } => {
                if !at_destination {
                    packet.hop += 1;
                    self.offer(packet);
                }
            }
            FlowRef::Probe { idx, reverse: false } => {
                if at_destination {
                    // The receiver acknowledges immediately, echoing the
                    // mark and identification field on the reverse path.
                    let data = packet.header.expect("probe packets carry headers");
                    let initial_ttl = self.probes[idx].params.initial_ttl();
                    let ack_packet = Packet {
                        flow: FlowRef::Probe { idx, reverse: true },
                        hop: 1,
                        header: Some(make_ack(&data, initial_ttl)),
                    };
                    self.offer(ack_packet);
                } else {
                    self.forward_through_router(&mut packet);
                    self.offer(packet);
                }
            }
            FlowRef::Probe { idx, reverse: true } => {
                if at_destination {
                    // Back at the probe source: tally the echoed mark.
                    let header = packet.header.expect("acks carry headers");
                    self.probes[idx].tally.record_ack(&header);
                    self.result.acks.push(AckRow {
                        time: self.now,
                        source_id: self.config.probes[idx].name.clone(),
                        ipid: header.ack_of.expect("acks echo an ipid"),
                        marked: header.marked,
                    });
                } else {
                    self.forward_through_router(&mut packet);
                    self.offer(packet);
                }
            }
        }
    }

    /// Apply router-side header processing for the hop the packet is
    /// about to take: markability is judged against the arrival TTL and
    /// the outbound link's load factor, then the TTL drops by one.
    fn forward_through_router(&mut self, packet: &mut Packet) {
        let (_, here, next) = self.path_nodes(packet.flow, packet.hop);
        let link_idx = self
            .config
            .link_between(here, next)
            .expect("routes only use declared links");
        let link = &mut self.links[link_idx];
        let load = link.tracker.current_load();
        let header = packet.header.as_mut().expect("probe packets carry headers");
        process_at_router(header, self.config.slots, load, &mut link.mark_rng);
        packet.hop += 1;
    }

    fn handle_sample(&mut self, index: u64) {
        for link in &mut self.links {
            link.tracker.sample_queue(link.queue.backlog());
        }
        let t = (index + 1) as f64 * self.config.load.sample_interval;
        if self.horizon(t) {
            self.events.push(t, EventKind::SampleTick { index: index + 1 });
        }
    }

    fn handle_window(&mut self, index: u64) {
        for (idx, link) in self.links.iter_mut().enumerate() {
            let rho = link.tracker.close_window();
            self.result.ground_truth.push(GroundTruthRow {
                time: self.now,
                link_id: self.config.links[idx].id.clone(),
                rho,
            });
        }
        let t = (index + 1) as f64 * self.config.load.window;
        if self.horizon(t) {
            self.events.push(t, EventKind::WindowTick { index: index + 1 });
        }
    }

    fn handle_period(&mut self, index: u64) {
        for (idx, probe) in self.probes.iter_mut().enumerate() {
            let closed = probe.tally.close_period();
            for router in 1..=probe.params.hops {
                let i = router as usize - 1;
                if let Some(e_raw) = closed.estimates[i] {
                    let l_hat = probe.forecasters[i].observe(e_raw);
                    self.result.estimates.push(EstimateRow {
                        period_end_time: self.now,
                        source_id: self.config.probes[idx].name.clone(),
                        router_index: router,
                        e_raw,
                        l_hat,
                    });
                }
            }
        }
        let t = (index + 1) as f64 * self.config.period;
        if self.horizon(t) {
            self.events.push(t, EventKind::PeriodTick { index: index + 1 });
        }
    }
}
