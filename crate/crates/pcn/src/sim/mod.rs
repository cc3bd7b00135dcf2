//! Deterministic discrete-event network simulator.
//!
//! The simulator executes a declarative scenario — nodes, bidirectional
//! links with capacity/delay/buffer, fixed-rate probe flows that exercise
//! the marking protocol, and open-loop background flows replayed from
//! traces or synthetic models — on a single-threaded event loop with
//! deterministic tie-breaking. A run produces plain CSV artifacts:
//! per-window ground-truth load factors, per-period source-side estimates,
//! the attributed acknowledgement log, per-link packet accounting, and the
//! flow-to-link path map, which the evaluation tooling post-processes.
//!
//! Determinism contract: the same configuration and seed produce
//! byte-identical artifact CSVs on every run. All randomness flows from
//! one master seed through per-entity labeled streams, so adding one flow
//! never perturbs another's draws.

pub mod artifacts;
pub mod config;
pub mod engine;
mod event;
mod queue;
pub mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a per-entity RNG stream from the master seed and a stable
/// label. Streams for distinct labels are statistically independent, and
/// each is a pure function of `(master, label)`.
pub(crate) fn derive_rng(master: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
