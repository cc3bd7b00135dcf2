//! One-bit probabilistic congestion notification (PCN).
//!
//! A path's routers signal their local load to the traffic source using a
//! single header bit: each router may mark a packet only when the packet's
//! TTL and IP identification fields agree modulo a shared cycle length, so
//! along any path at most one router is eligible per packet. Marks are
//! echoed back on acknowledgements, and the source turns observed marking
//! frequencies into per-router load estimates which a lightweight
//! moving-average model then corrects for measurement delay.
//!
//! The crate bundles:
//!
//! * [`protocol`] — header encoding, markability, mark attribution and the
//!   source-side tally that converts echoed marks into load estimates;
//! * [`loadfactor`] — the router-side load-factor computation that drives
//!   marking probabilities;
//! * [`forecast`] — ACF/PACF diagnostics and an integrated first-order
//!   moving-average forecaster used to correct stale estimates;
//! * [`sim`] — a deterministic discrete-event simulator producing marking
//!   and ground-truth logs;
//! * [`eval`] — estimator accuracy sweeps (RMSE/bias of raw vs corrected
//!   estimates) over simulator artifacts;
//! * [`cli`] — implementations of the `pcn` command-line subcommands.

pub mod cli;
pub mod eval;
pub mod forecast;
pub mod loadfactor;
pub mod protocol;
pub mod sim;

/// Unified error type for the crate.
///
/// Errors are split into two families so callers (notably the CLI) can
/// distinguish "the input was bad" from "the run itself failed":
/// [`Error::is_validation`] returns `true` for the former.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration file or parameter set failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A trace file could not be parsed or violated ordering rules.
    #[error("trace {path}:{line}: {message}")]
    Trace {
        /// File the offending record came from.
        path: String,
        /// 1-based line number of the offending record.
        line: usize,
        /// What was wrong with it.
        message: String,
    },

    /// A time series was unusable for the requested analysis
    /// (too short, non-finite values, ...).
    #[error("invalid series: {0}")]
    Series(String),

    /// Run artifacts were missing or inconsistent when an evaluation
    /// tried to load them.
    #[error("artifact error: {0}")]
    Artifacts(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV encoding/decoding failure while reading or writing artifacts.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error denotes invalid user input (as opposed to a
    /// failure while executing an otherwise valid request).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Trace { .. } | Error::Series(_)
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
