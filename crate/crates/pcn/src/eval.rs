//! Offline evaluation harness: replays a run's acknowledgement log at
//! several estimation-period lengths and scores the raw and corrected
//! load predictors against per-link ground truth.
//!
//! # Method
//!
//! One simulation feeds every period length `t_P` in the sweep, so the
//! comparison isolates the estimators from traffic randomness. For each
//! `t_P` (an integer multiple of the measurement window):
//!
//! 1. The first `warmup_fraction` of the run (in whole windows) is
//!    discarded; periods start at the warm-up boundary.
//! 2. Acknowledgements are re-tallied per probe into periods of `t_P`,
//!    yielding a per-router estimate series.
//! 3. A moving-average coefficient is fitted on the training segment
//!    (the next `training_fraction` of the run) and the corrected
//!    one-step-ahead predictor streams over the whole series.
//! 4. On the evaluation segment, both predictors are scored against the
//!    ground truth: the mean link load factor over each period, through
//!    the router-to-link join the run recorded.
//!
//! The raw predictor is the corrected one with the coefficient forced to
//! zero (last estimate carried forward), so the two columns differ only
//! by the fitted coefficient.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::forecast::{fit_arima011, ForecastState, MIN_FIT_LEN};
use crate::protocol::{PacketHeader, TallyTable};
use crate::sim::artifacts::{self, RunResult};
use crate::sim::config::{period_multiple, SimConfig};
use crate::{Error, Result};

/// Period lengths (seconds) evaluated when none are given.
pub const DEFAULT_SWEEP: [f64; 5] = [0.2, 0.4, 0.8, 1.6, 3.2];

/// Cells with fewer scored periods than this are reported without
/// numbers: too short to say anything.
pub const MIN_EVAL_PERIODS: usize = 10;

/// How the run is split, as fractions of its total window count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSplit {
    /// Discarded from the start of the run (filters and queues settling).
    pub warmup_fraction: f64,
    /// Used to fit the correction coefficient.
    pub training_fraction: f64,
}

impl Default for EvalSplit {
    fn default() -> Self {
        EvalSplit {
            warmup_fraction: 0.10,
            training_fraction: 0.10,
        }
    }
}

impl EvalSplit {
    pub fn validate(&self) -> Result<()> {
        let ok = self.warmup_fraction >= 0.0
            && self.training_fraction >= 0.0
            && self.warmup_fraction + self.training_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "split fractions must be nonnegative and sum below 1, got \
                 warmup {} + training {}",
                self.warmup_fraction, self.training_fraction
            )))
        }
    }
}

/// One scored cell of the sweep. `rmse`/`bias` are empty when the cell
/// had fewer than [`MIN_EVAL_PERIODS`] scored periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t_p_seconds: f64,
    /// Probe flow name (one per traffic direction).
    pub direction: String,
    /// 1-based router position on that probe's path.
    pub router_index: u8,
    /// `"raw"` or `"corrected"`.
    pub estimator: String,
    pub rmse: Option<f64>,
    pub bias: Option<f64>,
    /// Number of periods actually scored.
    pub n_periods: u64,
}

/// Root mean square error between two equal-length series.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    let ss: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok((ss / n).sqrt())
}

/// Signed mean error `mean(actual − predicted)`: positive when the
/// predictor underestimates.
pub fn bias(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    Ok(actual.iter().zip(predicted).map(|(a, p)| a - p).sum::<f64>() / n)
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Series(format!(
            "series length mismatch: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Series("cannot score empty series".into()));
    }
    Ok(())
}

/// A run directory loaded back into memory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: SimConfig,
    pub artifacts: RunResult,
}

/// Load the scenario and artifacts a `run` command produced.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    Ok(LoadedRun {
        config: artifacts::load_run_config(dir)?,
        artifacts: artifacts::load_run_dir(dir)?,
    })
}

/// Integer period grid for one `t_P`, in whole measurement windows.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PeriodGrid {
    /// Windows per period.
    r: u64,
    /// Whole windows discarded as warm-up.
    warmup_windows: u64,
    /// Full periods available after warm-up.
    total: usize,
    /// Leading periods used for fitting.
    training: usize,
}

fn make_grid(t_p: f64, window: f64, total_windows: u64, split: EvalSplit) -> Result<PeriodGrid> {
    let r = period_multiple(t_p, window).ok_or_else(|| {
        Error::Config(format!(
            "period {t_p}s is not an integer multiple of the {window}s measurement window"
        ))
    })?;
    let warmup_windows = (split.warmup_fraction * total_windows as f64).ceil() as u64;
    let usable = total_windows.saturating_sub(warmup_windows);
    let total = (usable / r) as usize;
    let training_windows = split.training_fraction * total_windows as f64;
    let training = ((training_windows / r as f64).ceil() as usize).min(total);
    Ok(PeriodGrid {
        r,
        warmup_windows,
        total,
        training,
    })
}

/// 1-based index of the window containing time `t`, where window `k`
/// covers `((k−1)·w, k·w]`. The tolerance keeps boundary events (which
/// the simulator bins into the closing window) in window `k` even when
/// `t` sits a few ulps past `k·w`.
fn window_unit(t: f64, window: f64) -> i64 {
    (t / window - 1e-9).ceil() as i64
}

/// Period index of window unit `u` within a grid, if it falls in a full
/// post-warm-up period.
fn period_of_window(u: i64, grid: &PeriodGrid) -> Option<usize> {
    let offset = u - grid.warmup_windows as i64;
    if offset < 1 {
        return None;
    }
    let idx = ((offset - 1) / grid.r as i64) as usize;
    (idx < grid.total).then_some(idx)
}

/// Replay one probe's acknowledgement log into per-period, per-router
/// estimate series (carry-forward on empty periods, `None` before a
/// router's first sample ever).
fn replay_estimates(
    run: &LoadedRun,
    probe_idx: usize,
    grid: &PeriodGrid,
) -> Vec<Vec<Option<f64>>> {
    let probe = &run.config.probes[probe_idx];
    let params = run.config.protocol_params(probe);
    let hops = params.hops as usize;
    let mut tally = TallyTable::new(params);
    let mut series: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(grid.total); hops];
    let mut next_to_close = 0usize;

    let mut close_until = |upto: usize, tally: &mut TallyTable, series: &mut Vec<Vec<Option<f64>>>| {
        while next_to_close < upto {
            let closed = tally.close_period();
            for (router, estimate) in closed.estimates.iter().enumerate() {
                series[router].push(*estimate);
            }
            next_to_close += 1;
        }
    };

    for ack in &run.artifacts.acks {
        if ack.source_id != probe.name {
            continue;
        }
        let Some(period) = period_of_window(window_unit(ack.time, run.config.load.window), grid)
        else {
            continue;
        };
        close_until(period, &mut tally, &mut series);
        tally.record_ack(&PacketHeader {
            ipid: ack.ipid,
            ttl: 0,
            marked: ack.marked,
            ack_of: Some(ack.ipid),
        });
    }
    close_until(grid.total, &mut tally, &mut series);
    series
}

/// Mean true load factor per period for one link.
fn truth_series(rho_by_window: &[f64], grid: &PeriodGrid) -> Result<Vec<f64>> {
    let need = grid.warmup_windows as usize + grid.total * grid.r as usize;
    if rho_by_window.len() < need {
        return Err(Error::Artifacts(format!(
            "ground truth covers {} windows but the evaluation needs {need}",
            rho_by_window.len()
        )));
    }
    let r = grid.r as usize;
    let mut out = Vec::with_capacity(grid.total);
    for p in 0..grid.total {
        let start = grid.warmup_windows as usize + p * r;
        let mean = rho_by_window[start..start + r].iter().sum::<f64>() / r as f64;
        out.push(mean);
    }
    Ok(out)
}

/// One-step-ahead predictions streamed over an estimate series:
/// `pred[l]` is the forecast of period `l` issued at period `l − 1`
/// (`None` until the series has produced a first value).
fn stream_predictions(series: &[Option<f64>], theta: f64) -> Vec<Option<f64>> {
    let mut state = ForecastState::new(theta);
    let mut pred = vec![None; series.len() + 1];
    for (l, value) in series.iter().enumerate() {
        if let Some(v) = *value {
            pred[l + 1] = Some(state.observe(v));
        }
    }
    pred
}

/// Replay the run at every requested period length and score both
/// estimators per probe and router. `force_theta` overrides the fitted
/// correction coefficient (the raw column always uses zero).
pub fn sweep(
    run: &LoadedRun,
    t_p_values: &[f64],
    split: EvalSplit,
    force_theta: Option<f64>,
) -> Result<Vec<ReportRow>> {
    split.validate()?;
    if t_p_values.is_empty() {
        return Err(Error::Config("no period lengths to evaluate".into()));
    }
    if let Some(theta) = force_theta {
        if !(theta.is_finite() && theta.abs() < 1.0) {
            return Err(Error::Config(format!(
                "forced coefficient must lie in (-1, 1), got {theta}"
            )));
        }
    }
    let window = run.config.load.window;
    let total_windows = (run.config.duration / window + 1e-9).floor() as u64;

    let mut t_ps: Vec<f64> = t_p_values.to_vec();
    t_ps.sort_by(f64::total_cmp);
    t_ps.dedup();

    // rho per link, indexed by window unit (slot 0 unused).
    let mut rho_by_link: HashMap<&str, Vec<f64>> = HashMap::new();
    for row in &run.artifacts.ground_truth {
        let entry = rho_by_link.entry(row.link_id.as_str()).or_default();
        let unit = (row.time / window).round() as usize;
        if entry.len() < unit + 1 {
            entry.resize(unit + 1, f64::NAN);
        }
        entry[unit] = row.rho;
    }
    let link_of: HashMap<(&str, u8), &str> = run
        .artifacts
        .paths
        .iter()
        .map(|p| ((p.source_id.as_str(), p.router_index), p.link_id.as_str()))
        .collect();

    let mut rows = Vec::new();
    for &t_p in &t_ps {
        let grid = make_grid(t_p, window, total_windows, split)?;
        for (probe_idx, probe) in run.config.probes.iter().enumerate() {
            let estimates = replay_estimates(run, probe_idx, &grid);
            for router in 1..=probe.hops() {
                let link = link_of.get(&(probe.name.as_str(), router)).ok_or_else(|| {
                    Error::Artifacts(format!(
                        "no path entry for probe {:?} router {router}",
                        probe.name
                    ))
                })?;
                let rho = rho_by_link.get(link).ok_or_else(|| {
                    Error::Artifacts(format!("no ground truth for link {link}"))
                })?;
                // Slot 0 of the window indexing is unused: drop it so the
                // series aligns window unit u with index u − 1.
                let truth = truth_series(&rho[1..], &grid)?;
                let series = &estimates[router as usize - 1];

                let fitted = force_theta.unwrap_or_else(|| {
                    let training: Vec<f64> =
                        series[..grid.training].iter().flatten().copied().collect();
                    if training.len() >= MIN_FIT_LEN {
                        fit_arima011(&training).map(|f| f.theta).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                });

                for (estimator, theta) in [("raw", 0.0), ("corrected", fitted)] {
                    let pred = stream_predictions(series, theta);
                    let mut actual = Vec::new();
                    let mut predicted = Vec::new();
                    for l in grid.training..grid.total {
                        if let Some(p) = pred[l] {
                            actual.push(truth[l]);
                            predicted.push(p);
                        }
                    }
                    let (r_val, b_val) = if actual.len() >= MIN_EVAL_PERIODS {
                        (Some(rmse(&actual, &predicted)?), Some(bias(&actual, &predicted)?))
                    } else {
                        (None, None)
                    };
                    rows.push(ReportRow {
                        t_p_seconds: t_p,
                        direction: probe.name.clone(),
                        router_index: router,
                        estimator: estimator.to_string(),
                        rmse: r_val,
                        bias: b_val,
                        n_periods: actual.len() as u64,
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        a.t_p_seconds
            .total_cmp(&b.t_p_seconds)
            .then_with(|| a.direction.cmp(&b.direction))
            .then_with(|| a.router_index.cmp(&b.router_index))
            .then_with(|| a.estimator.cmp(&b.estimator))
    });
    Ok(rows)
}

/// Write a sweep report as CSV.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
