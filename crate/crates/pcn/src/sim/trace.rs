//! Packet-arrival traces: file format, synthetic generators, and the
//! lazy samplers the engine draws arrivals from.
//!
//! Trace files are plain text: one `arrival_time_seconds size_bytes` pair
//! per line, `#` lines are comments. Arrival times must be nondecreasing;
//! on load they are shifted so the first arrival is at time zero, making
//! every trace start-aligned regardless of when it was captured.
//!
//! Synthetic models produce the same kind of arrival stream
//! deterministically from a seed: a plain Poisson process, or a two-state
//! on/off process (Markov-modulated Poisson) whose exponentially
//! distributed dwell times create load that drifts on much longer time
//! scales than the measurement windows observing it.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::{Error, Result};

/// One packet arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Seconds since the first arrival of the trace.
    pub time: f64,
    /// Packet size in bytes (carried for future byte-accounting work;
    /// service in the simulator is per-packet).
    pub size: u32,
}

/// A fully loaded arrival trace, start-aligned at time zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceFlow {
    pub records: Vec<TraceRecord>,
}

/// Parse a trace file. Comments (`#`) and blank lines are skipped; times
/// must be nondecreasing; sizes must be positive integers. The returned
/// records are shifted so the first arrival happens at time zero.
pub fn load_trace(path: &Path) -> Result<TraceFlow> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read {display}: {e}"),
        ))
    })?;
    let reader = std::io::BufReader::new(file);

    let mut records = Vec::new();
    let mut prev_time = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let fail = |message: String| Error::Trace {
            path: display.clone(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| fail(format!("read error: {e}")))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split_whitespace();
        let (Some(t), Some(s), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(fail(
                "expected exactly two fields: arrival_time_seconds size_bytes".into(),
            ));
        };
        let time: f64 = t
            .parse()
            .map_err(|_| fail(format!("bad arrival time {t:?}")))?;
        if !time.is_finite() {
            return Err(fail(format!("bad arrival time {t:?}")));
        }
        let size: u32 = s.parse().map_err(|_| fail(format!("bad size {s:?}")))?;
        if size == 0 {
            return Err(fail("size must be positive".into()));
        }
        if time < prev_time {
            return Err(fail(format!(
                "arrival times must be nondecreasing ({time} after {prev_time})"
            )));
        }
        prev_time = time;
        records.push(TraceRecord { time, size });
    }
    if records.is_empty() {
        return Err(Error::Trace {
            path: display,
            line: 0,
            message: "trace contains no records".into(),
        });
    }
    let start = records[0].time;
    for r in &mut records {
        r.time -= start;
    }
    Ok(TraceFlow { records })
}

/// Write a trace in the format [`load_trace`] reads. Times are written in
/// shortest round-trip form, so save → load reproduces the records
/// exactly.
pub fn save_trace(path: &Path, flow: &TraceFlow) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# arrival_time_seconds size_bytes")?;
    for r in &flow.records {
        writeln!(out, "{} {}", r.time, r.size)?;
    }
    out.flush()?;
    Ok(())
}

/// A synthetic arrival model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthModel {
    /// Homogeneous Poisson arrivals.
    Poisson {
        /// Mean arrival rate in packets per second.
        rate: f64,
    },
    /// Two-state Markov-modulated Poisson process: exponential dwell
    /// times alternate between a high-rate ON state and a low-rate OFF
    /// state.
    OnOffMmpp {
        rate_on: f64,
        rate_off: f64,
        /// Mean ON dwell in seconds.
        mean_on: f64,
        /// Mean OFF dwell in seconds.
        mean_off: f64,
    },
}

impl SynthModel {
    /// Check the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match *self {
            SynthModel::Poisson { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad("poisson model needs rate > 0");
                }
            }
            SynthModel::OnOffMmpp {
                rate_on,
                rate_off,
                mean_on,
                mean_off,
            } => {
                if !(rate_on > 0.0 && rate_on.is_finite()) {
                    return bad("on/off model needs rate_on > 0");
                }
                if !(rate_off >= 0.0 && rate_off.is_finite()) {
                    return bad("on/off model needs rate_off >= 0");
                }
                if !(mean_on > 0.0 && mean_on.is_finite())
                    || !(mean_off > 0.0 && mean_off.is_finite())
                {
                    return bad("on/off model needs positive mean dwell times");
                }
            }
        }
        Ok(())
    }
}

/// Lazy arrival-time stream: yields strictly increasing times until the
/// underlying model is exhausted (only finite traces exhaust).
#[derive(Debug)]
pub(crate) enum ArrivalSampler {
    Poisson {
        t: f64,
        gap: Exp<f64>,
        rng: ChaCha8Rng,
    },
    OnOff {
        t: f64,
        on: bool,
        state_end: f64,
        gap_on: Exp<f64>,
        /// `None` models a silent OFF state (rate 0).
        gap_off: Option<Exp<f64>>,
        dwell_on: Exp<f64>,
        dwell_off: Exp<f64>,
        rng: ChaCha8Rng,
    },
    Trace {
        records: Vec<TraceRecord>,
        pos: usize,
    },
}

impl ArrivalSampler {
    /// Sampler for a synthetic model, fed by its own RNG stream. The
    /// on/off sampler starts in a state drawn from the stationary
    /// distribution so an ensemble of flows desynchronises immediately.
    pub fn synthetic(model: SynthModel, mut rng: ChaCha8Rng) -> Result<Self> {
        model.validate()?;
        Ok(match model {
            SynthModel::Poisson { rate } => ArrivalSampler::Poisson {
                t: 0.0,
                gap: Exp::new(rate).expect("validated rate"),
                rng,
            },
            SynthModel::OnOffMmpp {
                rate_on,
                rate_off,
                mean_on,
                mean_off,
            } => {
                let dwell_on = Exp::new(1.0 / mean_on).expect("validated dwell");
                let dwell_off = Exp::new(1.0 / mean_off).expect("validated dwell");
                let duty = mean_on / (mean_on + mean_off);
                let on = rng.random::<f64>() < duty;
                let first_dwell = if on { dwell_on } else { dwell_off };
                let state_end = first_dwell.sample(&mut rng);
                ArrivalSampler::OnOff {
                    t: 0.0,
                    on,
                    state_end,
                    gap_on: Exp::new(rate_on).expect("validated rate"),
                    gap_off: if rate_off > 0.0 {
                        Some(Exp::new(rate_off).expect("validated rate"))
                    } else {
                        None
                    },
                    dwell_on,
                    dwell_off,
                    rng,
                }
            }
        })
    }

    pub fn from_trace(flow: TraceFlow) -> Self {
        ArrivalSampler::Trace {
            records: flow.records,
            pos: 0,
        }
    }

    /// Next arrival time, or `None` when a finite trace runs out.
    pub fn next_time(&mut self) -> Option<f64> {
        match self {
            ArrivalSampler::Poisson { t, gap, rng } => {
                *t += gap.sample(rng);
                Some(*t)
            }
            ArrivalSampler::OnOff {
                t,
                on,
                state_end,
                gap_on,
                gap_off,
                dwell_on,
                dwell_off,
                rng,
            } => loop {
                let candidate = match (*on, &*gap_off) {
                    (true, _) => *t + gap_on.sample(rng),
                    (false, Some(gap)) => *t + gap.sample(rng),
                    (false, None) => f64::INFINITY,
                };
                if candidate <= *state_end {
                    *t = candidate;
                    return Some(*t);
                }
                // The state flips before the candidate arrival; thanks to
                // memorylessness we simply resample in the new state.
                *t = *state_end;
                *on = !*on;
                let dwell = if *on { &mut *dwell_on } else { &mut *dwell_off };
                *state_end = *t + dwell.sample(rng);
            },
            ArrivalSampler::Trace { records, pos } => {
                let r = records.get(*pos)?;
                *pos += 1;
                Some(r.time)
            }
        }
    }
}

/// Materialise a synthetic model into a trace covering `duration`
/// seconds. Deterministic: the same model, duration and seed always
/// produce the identical trace.
pub fn gen_synthetic_trace(
    model: SynthModel,
    duration: f64,
    seed: u64,
    size_bytes: u32,
) -> Result<TraceFlow> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Config("trace duration must be positive".into()));
    }
    if size_bytes == 0 {
        return Err(Error::Config("packet size must be positive".into()));
    }
    let mut sampler = ArrivalSampler::synthetic(model, super::derive_rng(seed, "trace"))?;
    let mut records = Vec::new();
    while let Some(t) = sampler.next_time() {
        if t > duration {
            break;
        }
        records.push(TraceRecord {
            time: t,
            size: size_bytes,
        });
    }
    Ok(TraceFlow { records })
}
