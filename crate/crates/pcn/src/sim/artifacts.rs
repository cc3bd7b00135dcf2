//! Run-directory artifacts: the data model a simulation produces and the
//! CSV/JSON files it is persisted as.
//!
//! A run directory contains:
//!
//! | file               | contents                                        |
//! |--------------------|-------------------------------------------------|
//! | `ground_truth.csv` | per-link load factor at every window close      |
//! | `estimates.csv`    | per-router source-side estimates each period    |
//! | `acks.csv`         | every acknowledgement received by a probe source|
//! | `accounting.csv`   | per-link packet conservation counters           |
//! | `paths.csv`        | router-index → link-id join table per probe     |
//! | `config.toml`      | byte copy of the scenario that was run          |
//! | `manifest.json`    | provenance (config path, seed, version, time)   |
//!
//! Every file except the manifest is byte-deterministic for a given
//! scenario and seed; the manifest carries a wall-clock timestamp.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{parse_config, SimConfig};
use crate::{Error, Result};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const ACKS_FILE: &str = "acks.csv";
pub const ACCOUNTING_FILE: &str = "accounting.csv";
pub const PATHS_FILE: &str = "paths.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One link's true load factor over one closed measurement window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    /// Window close time in seconds.
    pub time: f64,
    pub link_id: String,
    /// Load factor in percent.
    pub rho: f64,
}

/// One router's source-side estimate at one estimation-period close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub period_end_time: f64,
    /// Name of the probe flow that produced the estimate.
    pub source_id: String,
    /// 1-based position of the router on the probe's path.
    pub router_index: u8,
    /// Marking-frequency estimate for this period, percent.
    pub e_raw: f64,
    /// The source's forecast of the next period's load, percent.
    pub l_hat: f64,
}

/// One acknowledgement received back at a probe source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckRow {
    /// Arrival time at the probe source, seconds.
    pub time: f64,
    /// Name of the probe flow.
    pub source_id: String,
    /// Echoed identification field of the acknowledged data packet.
    pub ipid: u16,
    /// Whether the acknowledged packet came back marked.
    pub marked: bool,
}

/// Packet conservation counters for one directed link over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingRow {
    pub link_id: String,
    /// Packets offered to the link (accepted or not).
    pub enqueued: u64,
    /// Packets that finished service and moved on.
    pub dequeued: u64,
    /// Packets rejected by the full buffer.
    pub dropped: u64,
    /// Packets still waiting or in service when the run ended.
    pub queued_end: u64,
}

/// Which directed link a probe's router index measures: router `i` marks
/// packets according to the load of its outbound link along the probe's
/// forward path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub source_id: String,
    pub router_index: u8,
    pub link_id: String,
}

/// Everything a finished simulation hands back, ready to persist.
#[derive(Debug, Clone, Default)]
pub struct RunResult {
    pub ground_truth: Vec<GroundTruthRow>,
    pub estimates: Vec<EstimateRow>,
    pub acks: Vec<AckRow>,
    pub accounting: Vec<AccountingRow>,
    pub paths: Vec<PathRow>,
}

/// Provenance sidecar for a run directory. The timestamp makes this the
/// one file excluded from byte-determinism guarantees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Scenario path as given on the command line.
    pub config: String,
    pub seed: u64,
    pub out_dir: String,
    /// Tool version that produced the run.
    pub version: String,
    /// Unix timestamp (seconds) of run creation.
    pub created_unix: u64,
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let path = dir.join(name);
    let mut r = csv::Reader::from_path(&path).map_err(|e| {
        Error::Artifacts(format!("cannot open {}: {e}", path.display()))
    })?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row.map_err(|e| {
            Error::Artifacts(format!("malformed row in {}: {e}", path.display()))
        })?);
    }
    Ok(rows)
}

/// Persist a finished run: five CSVs plus a byte copy of the scenario.
/// (The manifest is written separately since it is not deterministic.)
pub fn write_run_dir(dir: &Path, config_toml: &str, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(dir, GROUND_TRUTH_FILE, &result.ground_truth)?;
    write_csv(dir, ESTIMATES_FILE, &result.estimates)?;
    write_csv(dir, ACKS_FILE, &result.acks)?;
    write_csv(dir, ACCOUNTING_FILE, &result.accounting)?;
    write_csv(dir, PATHS_FILE, &result.paths)?;
    std::fs::write(dir.join(CONFIG_FILE), config_toml)?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Artifacts(format!("manifest serialisation failed: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Artifacts(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Artifacts(format!("malformed {}: {e}", path.display())))
}

/// Re-parse the scenario archived in a run directory. Relative trace
/// paths resolve against the run directory, but nothing re-reads traces
/// after a run, so analysis of archived runs is unaffected.
pub fn load_run_config(dir: &Path) -> Result<SimConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Artifacts(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, dir)
}

/// Load every artifact of a run directory back into memory.
pub fn load_run_dir(dir: &Path) -> Result<RunResult> {
    Ok(RunResult {
        ground_truth: read_csv(dir, GROUND_TRUTH_FILE)?,
        estimates: read_csv(dir, ESTIMATES_FILE)?,
        acks: read_csv(dir, ACKS_FILE)?,
        accounting: read_csv(dir, ACCOUNTING_FILE)?,
        paths: read_csv(dir, PATHS_FILE)?,
    })
}
