//! Declarative simulation scenarios: TOML schema, validation, and route
//! resolution.
//!
//! A scenario file has scalar sections `[sim]`, `[protocol]`, `[load]`
//! and `[estimation]` plus three tables-of-record: `[[node]]`, `[[link]]`
//! (bidirectional; each becomes two directed links), `[[probe]]`
//! (fixed-rate flows running the marking protocol, acknowledged per
//! packet) and `[[background]]` (open-loop one-way traffic from a trace
//! file or an inline synthetic model). Routes are shortest paths computed
//! over the declared links, with ties broken by declaration order so a
//! given file always resolves identically.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::trace::SynthModel;
use crate::loadfactor::LoadFactorParams;
use crate::protocol::ProtocolParams;
use crate::{Error, Result};

/// Fraction of a link's capacity that all probe traffic crossing it
/// (data plus acknowledgements) may claim, unless the scenario overrides
/// it. Probes are measurement traffic and must not cause the congestion
/// they measure.
pub const DEFAULT_MAX_PROBE_LOAD: f64 = 0.05;

// ---------------------------------------------------------------------
// Raw deserialization layer (field names exactly as written in TOML).
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sim: RawSim,
    #[serde(default)]
    protocol: RawProtocol,
    #[serde(default)]
    load: RawLoad,
    #[serde(default)]
    estimation: RawEstimation,
    #[serde(default)]
    node: Vec<RawNode>,
    #[serde(default)]
    link: Vec<RawLink>,
    #[serde(default)]
    probe: Vec<RawProbe>,
    #[serde(default)]
    background: Vec<RawBackground>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration: f64,
    max_probe_load: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    slots: Option<u8>,
    presignal: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    queue_weight: Option<f64>,
    target_utilization: Option<f64>,
    window: Option<f64>,
    ewma_weight: Option<f64>,
    sample_interval: Option<f64>,
    scale: Option<f64>,
    offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    period: Option<f64>,
    theta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    a: String,
    b: String,
    capacity: f64,
    delay: f64,
    queue: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    name: String,
    source: String,
    dest: String,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackground {
    name: String,
    source: String,
    dest: String,
    trace: Option<String>,
    model: Option<String>,
    rate: Option<f64>,
    rate_on: Option<f64>,
    rate_off: Option<f64>,
    mean_on: Option<f64>,
    mean_off: Option<f64>,
}

// ---------------------------------------------------------------------
// Resolved configuration.
// ---------------------------------------------------------------------

/// One directed link, ready for the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub from: usize,
    pub to: usize,
    /// Service rate in packets per second.
    pub capacity: f64,
    /// Propagation delay in seconds.
    pub delay: f64,
    /// Waiting-buffer limit in packets.
    pub queue_limit: usize,
    /// Stable identifier used in artifact CSVs, e.g. `"r1->r2"`.
    pub id: String,
}

/// A fixed-rate probe flow running the marking protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub name: String,
    pub source: usize,
    pub dest: usize,
    /// Emission rate in packets per second (constant spacing).
    pub rate: f64,
    /// Node indices from source to destination inclusive.
    pub path: Vec<usize>,
}

impl ProbeConfig {
    /// Number of marking routers the flow crosses.
    pub fn hops(&self) -> u8 {
        (self.path.len() - 2) as u8
    }
}

/// Where a background flow's arrivals come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSpec {
    /// Replay a trace file (path already resolved).
    Trace(PathBuf),
    /// Sample a synthetic model.
    Synthetic(SynthModel),
}

/// An open-loop background flow.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundConfig {
    pub name: String,
    pub source: usize,
    pub dest: usize,
    pub path: Vec<usize>,
    pub arrivals: ArrivalSpec,
}

/// A fully validated simulation scenario.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Simulated run length in seconds.
    pub duration: f64,
    /// Per-link cap on aggregate probe traffic as a capacity fraction.
    pub max_probe_load: f64,
    /// Marking-rule modulus shared by all probes.
    pub slots: u8,
    /// Whether probe sources pre-select IPids for full markability.
    pub presignal: bool,
    /// Load-factor computation parameters (shared by every link).
    pub load: LoadFactorParams,
    /// Source-side estimation period in seconds.
    pub period: f64,
    /// `period / load.window`, validated integral.
    pub windows_per_period: u64,
    /// Moving-average coefficient of the live per-router forecasters.
    pub live_theta: f64,
    pub nodes: Vec<String>,
    pub links: Vec<LinkConfig>,
    pub probes: Vec<ProbeConfig>,
    pub backgrounds: Vec<BackgroundConfig>,
    /// Exact text the scenario was parsed from (archived with run
    /// artifacts so a run directory is self-contained).
    pub raw_toml: String,
    link_lookup: HashMap<(usize, usize), usize>,
}

impl SimConfig {
    /// Index of the directed link `from -> to`, if declared.
    pub fn link_between(&self, from: usize, to: usize) -> Option<usize> {
        self.link_lookup.get(&(from, to)).copied()
    }

    /// Protocol parameters for one probe flow.
    pub fn protocol_params(&self, probe: &ProbeConfig) -> ProtocolParams {
        ProtocolParams {
            slots: self.slots,
            presignal: self.presignal,
            hops: probe.hops(),
        }
    }
}

/// Read and validate a scenario file. Relative trace paths resolve
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read {}: {e}", path.display()),
            ))
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

/// Parse and validate scenario text. `base_dir` anchors relative trace
/// paths.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<SimConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse error: {e}")))?;
    resolve(raw, text, base_dir)
}

fn err(msg: String) -> Error {
    Error::Config(msg)
}

fn require_positive(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(err(format!("{what} must be positive, got {value}")))
    }
}

fn resolve(raw: RawConfig, text: &str, base_dir: &Path) -> Result<SimConfig> {
    let duration = require_positive(raw.sim.duration, "sim.duration")?;
    let max_probe_load = match raw.sim.max_probe_load {
        None => DEFAULT_MAX_PROBE_LOAD,
        Some(v) if v.is_finite() && v > 0.0 && v <= 1.0 => v,
        Some(v) => return Err(err(format!("sim.max_probe_load must be in (0, 1], got {v}"))),
    };

    let slots = raw.protocol.slots.unwrap_or(crate::protocol::DEFAULT_SLOTS);
    if slots == 0 {
        return Err(err("protocol.slots must be at least 1".into()));
    }
    let presignal = raw.protocol.presignal.unwrap_or(false);
    if presignal && !slots.is_power_of_two() {
        return Err(err(format!(
            "pre-signalling requires protocol.slots to be a power of two \
             (IPids advance by whole cycles and must keep their residues \
             when the 16-bit counter wraps); got {slots}"
        )));
    }

    let defaults = LoadFactorParams::default();
    let load = LoadFactorParams {
        queue_weight: raw.load.queue_weight.unwrap_or(defaults.queue_weight),
        target_utilization: raw
            .load
            .target_utilization
            .unwrap_or(defaults.target_utilization),
        window: raw.load.window.unwrap_or(defaults.window),
        ewma_weight: raw.load.ewma_weight.unwrap_or(defaults.ewma_weight),
        sample_interval: raw.load.sample_interval.unwrap_or(defaults.sample_interval),
        scale: raw.load.scale.unwrap_or(defaults.scale),
        offset: raw.load.offset.unwrap_or(defaults.offset),
    };
    require_positive(load.window, "load.window")?;
    require_positive(load.sample_interval, "load.sample_interval")?;
    require_positive(load.queue_weight, "load.queue_weight")?;
    if !(load.target_utilization > 0.0 && load.target_utilization <= 1.0) {
        return Err(err(format!(
            "load.target_utilization must be in (0, 1], got {}",
            load.target_utilization
        )));
    }
    if !(load.ewma_weight > 0.0 && load.ewma_weight <= 1.0) {
        return Err(err(format!(
            "load.ewma_weight must be in (0, 1], got {}",
            load.ewma_weight
        )));
    }
    if !load.scale.is_finite() || !load.offset.is_finite() {
        return Err(err("load.scale and load.offset must be finite".into()));
    }

    let period = raw.estimation.period.unwrap_or(load.window);
    require_positive(period, "estimation.period")?;
    let windows_per_period = period_multiple(period, load.window).ok_or_else(|| {
        err(format!(
            "estimation.period ({period}) must be an integer multiple of load.window ({})",
            load.window
        ))
    })?;
    let live_theta = raw.estimation.theta.unwrap_or(0.0);
    if !(live_theta.is_finite() && live_theta.abs() < 1.0) {
        return Err(err(format!(
            "estimation.theta must lie in (-1, 1), got {live_theta}"
        )));
    }

    // Nodes.
    if raw.node.is_empty() {
        return Err(err("scenario declares no nodes".into()));
    }
    let mut node_index = HashMap::new();
    let mut nodes = Vec::with_capacity(raw.node.len());
    for n in &raw.node {
        if n.name.is_empty() {
            return Err(err("node names must be non-empty".into()));
        }
        if node_index.insert(n.name.clone(), nodes.len()).is_some() {
            return Err(err(format!("duplicate node name {:?}", n.name)));
        }
        nodes.push(n.name.clone());
    }
    let lookup_node = |name: &str, what: &str| -> Result<usize> {
        node_index
            .get(name)
            .copied()
            .ok_or_else(|| err(format!("{what} references unknown node {name:?}")))
    };

    // Links (each declaration yields both directions).
    let mut links = Vec::with_capacity(raw.link.len() * 2);
    let mut link_lookup = HashMap::new();
    for l in &raw.link {
        let a = lookup_node(&l.a, "link")?;
        let b = lookup_node(&l.b, "link")?;
        if a == b {
            return Err(err(format!("link {:?} -- {:?} is a self-loop", l.a, l.b)));
        }
        let capacity = require_positive(l.capacity, "link capacity")?;
        if !(l.delay.is_finite() && l.delay >= 0.0) {
            return Err(err(format!("link delay must be nonnegative, got {}", l.delay)));
        }
        for (from, to) in [(a, b), (b, a)] {
            let id = format!("{}->{}", nodes[from], nodes[to]);
            if link_lookup.insert((from, to), links.len()).is_some() {
                return Err(err(format!("duplicate link between {:?} and {:?}", l.a, l.b)));
            }
            links.push(LinkConfig {
                from,
                to,
                capacity,
                delay: l.delay,
                queue_limit: l.queue as usize,
                id,
            });
        }
    }

    // Adjacency in declaration order keeps route resolution deterministic.
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for link in &links {
        adjacency[link.from].push(link.to);
    }

    let route = |from: usize, to: usize, what: &str| -> Result<Vec<usize>> {
        shortest_path(&adjacency, from, to).ok_or_else(|| {
            err(format!(
                "{what}: no route from {:?} to {:?}",
                nodes[from], nodes[to]
            ))
        })
    };

    let mut flow_names: HashMap<String, &str> = HashMap::new();
    let mut register_flow = |name: &str, kind: &'static str| -> Result<()> {
        if name.is_empty() {
            return Err(err(format!("{kind} flow names must be non-empty")));
        }
        if flow_names.insert(name.to_string(), kind).is_some() {
            return Err(err(format!("duplicate flow name {name:?}")));
        }
        Ok(())
    };

    // Probes.
    let mut probes = Vec::with_capacity(raw.probe.len());
    for p in &raw.probe {
        register_flow(&p.name, "probe")?;
        let source = lookup_node(&p.source, "probe")?;
        let dest = lookup_node(&p.dest, "probe")?;
        if source == dest {
            return Err(err(format!("probe {:?}: source equals destination", p.name)));
        }
        let rate = require_positive(p.rate, "probe rate")?;
        let path = route(source, dest, &format!("probe {:?}", p.name))?;
        if path.len() < 3 {
            return Err(err(format!(
                "probe {:?} crosses no intermediate router; nothing could mark it",
                p.name
            )));
        }
        let hops = path.len() - 2;
        if hops > u8::MAX as usize {
            return Err(err(format!("probe {:?} path is too long", p.name)));
        }
        let params = ProtocolParams {
            slots,
            presignal,
            hops: hops as u8,
        };
        if presignal && hops as u16 > slots as u16 {
            return Err(err(format!(
                "probe {:?}: pre-signalling needs hop count ({hops}) ≤ protocol.slots ({slots})",
                p.name
            )));
        }
        if params.initial_ttl() as usize + 1 < hops {
            return Err(err(format!("probe {:?} path exceeds the TTL range", p.name)));
        }
        probes.push(ProbeConfig {
            name: p.name.clone(),
            source,
            dest,
            rate,
            path,
        });
    }

    // Backgrounds.
    let mut backgrounds = Vec::with_capacity(raw.background.len());
    for b in &raw.background {
        register_flow(&b.name, "background")?;
        let source = lookup_node(&b.source, "background")?;
        let dest = lookup_node(&b.dest, "background")?;
        if source == dest {
            return Err(err(format!(
                "background {:?}: source equals destination",
                b.name
            )));
        }
        let path = route(source, dest, &format!("background {:?}", b.name))?;
        let arrivals = background_arrivals(b, base_dir)?;
        backgrounds.push(BackgroundConfig {
            name: b.name.clone(),
            source,
            dest,
            path,
            arrivals,
        });
    }

    let config = SimConfig {
        duration,
        max_probe_load,
        slots,
        presignal,
        load,
        period,
        windows_per_period,
        live_theta,
        nodes,
        links,
        probes,
        backgrounds,
        raw_toml: text.to_string(),
        link_lookup,
    };
    check_probe_budget(&config)?;
    Ok(config)
}

/// `period / window` when it is a whole number of windows (within float
/// tolerance), else `None`.
pub fn period_multiple(period: f64, window: f64) -> Option<u64> {
    if !(period > 0.0 && window > 0.0) {
        return None;
    }
    let ratio = period / window;
    let r = ratio.round();
    if r >= 1.0 && (ratio - r).abs() <= 1e-6 * r {
        Some(r as u64)
    } else {
        None
    }
}

/// Breadth-first shortest path; neighbor order (and therefore
/// tie-breaking) follows link declaration order.
fn shortest_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; adjacency.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from] = from;
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &next in &adjacency[n] {
            if prev[next] == usize::MAX {
                prev[next] = n;
                queue.push_back(next);
            }
        }
    }
    None
}

fn background_arrivals(b: &RawBackground, base_dir: &Path) -> Result<ArrivalSpec> {
    match (&b.trace, &b.model) {
        (Some(_), Some(_)) => Err(err(format!(
            "background {:?}: give either a trace file or a model, not both",
            b.name
        ))),
        (None, None) => Err(err(format!(
            "background {:?}: needs a trace file or a model",
            b.name
        ))),
        (Some(path), None) => {
            for (field, value) in [
                ("rate", b.rate),
                ("rate_on", b.rate_on),
                ("rate_off", b.rate_off),
                ("mean_on", b.mean_on),
                ("mean_off", b.mean_off),
            ] {
                if value.is_some() {
                    return Err(err(format!(
                        "background {:?}: {field} is meaningless with a trace file",
                        b.name
                    )));
                }
            }
            Ok(ArrivalSpec::Trace(base_dir.join(path)))
        }
        (None, Some(model)) => {
            let spec = match model.as_str() {
                "poisson" => {
                    let rate = b.rate.ok_or_else(|| {
                        err(format!("background {:?}: poisson model needs rate", b.name))
                    })?;
                    for (field, value) in [
                        ("rate_on", b.rate_on),
                        ("rate_off", b.rate_off),
                        ("mean_on", b.mean_on),
                        ("mean_off", b.mean_off),
                    ] {
                        if value.is_some() {
                            return Err(err(format!(
                                "background {:?}: {field} does not apply to the poisson model",
                                b.name
                            )));
                        }
                    }
                    SynthModel::Poisson { rate }
                }
                "onoff-mmpp" => {
                    let missing = |f: &str| {
                        err(format!("background {:?}: onoff-mmpp model needs {f}", b.name))
                    };
                    if b.rate.is_some() {
                        return Err(err(format!(
                            "background {:?}: use rate_on/rate_off with onoff-mmpp, not rate",
                            b.name
                        )));
                    }
                    SynthModel::OnOffMmpp {
                        rate_on: b.rate_on.ok_or_else(|| missing("rate_on"))?,
                        rate_off: b.rate_off.ok_or_else(|| missing("rate_off"))?,
                        mean_on: b.mean_on.ok_or_else(|| missing("mean_on"))?,
                        mean_off: b.mean_off.ok_or_else(|| missing("mean_off"))?,
                    }
                }
                other => {
                    return Err(err(format!(
                        "background {:?}: unknown model {other:?} (expected poisson or onoff-mmpp)",
                        b.name
                    )))
                }
            };
            spec.validate()
                .map_err(|e| err(format!("background {:?}: {e}", b.name)))?;
            Ok(ArrivalSpec::Synthetic(spec))
        }
    }
}

/// Sum each link's probe traffic (forward data plus returning
/// acknowledgements) and reject scenarios where probes claim more than
/// the configured capacity fraction anywhere.
fn check_probe_budget(config: &SimConfig) -> Result<()> {
    let mut per_link = vec![0.0f64; config.links.len()];
    for probe in &config.probes {
        for hop in 0..probe.path.len() - 1 {
            let fwd = config
                .link_between(probe.path[hop], probe.path[hop + 1])
                .expect("path uses declared links");
            let rev = config
                .link_between(probe.path[hop + 1], probe.path[hop])
                .expect("links are bidirectional");
            per_link[fwd] += probe.rate; // data packets
            per_link[rev] += probe.rate; // acknowledgements
        }
    }
    for (idx, load) in per_link.iter().enumerate() {
        let link = &config.links[idx];
        let budget = config.max_probe_load * link.capacity;
        if *load > budget {
            return Err(err(format!(
                "probe traffic on link {} is {load} packets/s, above the allowed \
                 {budget} ({}% of capacity {}); lower probe rates or raise sim.max_probe_load",
                link.id,
                config.max_probe_load * 100.0,
                link.capacity
            )));
        }
    }
    Ok(())
}
