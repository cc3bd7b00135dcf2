//! Acceptance gate for the marking/estimation pipeline.
//!
//! Each test checks one advertised guarantee end to end and prints a single
//! `acceptance <n> PASS` line (visible with `--nocapture`); failures panic
//! with the offending numbers. Tests 4–7 score the shipped parking-lot
//! example, which is simulated once per process and shared.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pcn::eval::{self, EvalSplit, LoadedRun, ReportRow, DEFAULT_SWEEP};
use pcn::forecast;
use pcn::protocol::{self, PacketHeader, ProtocolParams};
use pcn::sim::artifacts::{self, RunResult};
use pcn::sim::{config, engine};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SHARED_SEED: u64 = 42;

fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

struct SharedRun {
    config: config::SimConfig,
    result: RunResult,
}

/// The shipped parking-lot example, simulated once and reused by every
/// test that scores it.
fn shared_run() -> &'static SharedRun {
    static RUN: OnceLock<SharedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = config::load_config(&shipped_config("parking_lot.toml"))
            .expect("parking-lot example must parse");
        let result = engine::run(&config, SHARED_SEED).expect("parking-lot example must run");
        SharedRun { config, result }
    })
}

fn shared_loaded() -> LoadedRun {
    let run = shared_run();
    LoadedRun {
        config: run.config.clone(),
        artifacts: run.result.clone(),
    }
}

/// Report rows keyed as (direction, router) -> t_P in ms -> estimator -> row.
type ReportTable = BTreeMap<(String, u8), BTreeMap<u64, BTreeMap<String, ReportRow>>>;

fn tabulate(rows: Vec<ReportRow>) -> ReportTable {
    let mut table: ReportTable = BTreeMap::new();
    for row in rows {
        table
            .entry((row.direction.clone(), row.router_index))
            .or_default()
            .entry((row.t_p_seconds * 1000.0).round() as u64)
            .or_default()
            .insert(row.estimator.clone(), row);
    }
    table
}

#[test]
fn acceptance_1_at_most_one_marker_and_full_residue_coverage() {
    let start = Instant::now();
    for hops in 1..=32u8 {
        let params = ProtocolParams::new(hops);
        assert_eq!(params.slots, 32);
        let initial = params.initial_ttl();
        let mut residues_with_marker = 0u32;
        for residue in 0..32u16 {
            let markers = (0..hops)
                .filter(|&i| protocol::is_markable(initial - i, residue, 32))
                .count();
            assert!(
                markers <= 1,
                "hops={hops} residue={residue}: {markers} routers may mark"
            );
            residues_with_marker += markers as u32;
        }
        assert_eq!(
            residues_with_marker, hops as u32,
            "hops={hops}: each router must own exactly one residue"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "acceptance 1 PASS: 32 hop counts x 32 residues, at most one marker each, \
         h residues covered per path ({elapsed:?})"
    );
}

#[test]
fn acceptance_2_marking_fraction_is_unbiased() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut results = Vec::new();
    for rho in [10.0f64, 56.12, 90.0] {
        let mut marked = 0u64;
        for _ in 0..10_000 {
            // ttl 32 and ipid 0 share residue 0, so every draw is eligible.
            let mut header = PacketHeader {
                ipid: 0,
                ttl: 32,
                marked: false,
                ack_of: None,
            };
            if protocol::process_at_router(&mut header, 32, rho, &mut rng) {
                marked += 1;
            }
        }
        let observed = marked as f64 / 10_000.0 * 100.0;
        let sigma = (rho / 100.0 * (1.0 - rho / 100.0) / 10_000.0).sqrt() * 100.0;
        assert!(
            (observed - rho).abs() <= 3.0 * sigma,
            "rho={rho}: observed {observed:.3} outside 3-sigma band +/-{:.3}",
            3.0 * sigma
        );
        results.push(format!("{rho}->{observed:.2}"));
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "acceptance 2 PASS: marked fraction within 3-sigma of load [{}] ({elapsed:?})",
        results.join(", ")
    );
}

#[test]
fn acceptance_3_fit_recovers_known_ma_coefficient() {
    let start = Instant::now();
    let mut results = Vec::new();
    for (i, theta) in [-0.7f64, -0.3, 0.0].into_iter().enumerate() {
        // Integrated MA(1): increments carry the known coefficient.
        let mut rng = ChaCha8Rng::seed_from_u64(3100 + i as u64);
        let mut series = Vec::with_capacity(2000);
        let mut level = 50.0f64;
        let mut prev_eps = 0.0f64;
        for _ in 0..2000 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            level += eps + theta * prev_eps;
            prev_eps = eps;
            series.push(level);
        }
        let fit = forecast::fit_arima011(&series).expect("fit must succeed");
        assert!(
            (fit.theta - theta).abs() <= 0.1,
            "theta={theta}: fitted {:.4} off by more than 0.1",
            fit.theta
        );
        results.push(format!("{theta}->{:.3}", fit.theta));
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "acceptance 3 PASS: coefficient recovered within 0.1 [{}] ({elapsed:?})",
        results.join(", ")
    );
}

#[test]
fn acceptance_4_zero_coefficient_equals_crude_predictor() {
    let run = shared_loaded();

    // Element-wise over the full estimate log: a zero-coefficient
    // forecaster must echo the previous observation bit for bit.
    let mut by_cell: BTreeMap<(String, u8), Vec<f64>> = BTreeMap::new();
    for row in &run.artifacts.estimates {
        by_cell
            .entry((row.source_id.clone(), row.router_index))
            .or_default()
            .push(row.e_raw);
    }
    assert_eq!(by_cell.len(), 10, "expected 2 probes x 5 routers");
    let mut checked = 0usize;
    for ((source, router), series) in &by_cell {
        let forecasts = forecast::one_step_forecasts(series, 0.0);
        for (l, &pred) in forecasts.iter().enumerate() {
            assert_eq!(
                pred.to_bits(),
                series[l].to_bits(),
                "{source}/{router} period {l}: forced-zero forecast diverged from raw"
            );
            checked += 1;
        }
    }

    // The same must hold at report level: raw and corrected columns agree.
    let rows = eval::sweep(&run, &DEFAULT_SWEEP, EvalSplit::default(), Some(0.0))
        .expect("sweep must succeed");
    for (key, by_tp) in tabulate(rows) {
        for (tp_ms, by_est) in by_tp {
            let raw = &by_est["raw"];
            let corrected = &by_est["corrected"];
            assert_eq!(raw.rmse, corrected.rmse, "{key:?} t_P={tp_ms}ms rmse");
            assert_eq!(raw.bias, corrected.bias, "{key:?} t_P={tp_ms}ms bias");
            assert_eq!(raw.n_periods, corrected.n_periods);
        }
    }
    println!(
        "acceptance 4 PASS: forced-zero correction identical to crude predictor \
         over {checked} logged estimates and all report cells"
    );
}

#[test]
fn acceptance_5_differenced_estimates_show_lag_one_signature() {
    let start = Instant::now();
    let run = shared_run();

    // Skip the same warm-up stretch the scorer discards (first 10% of the
    // run, snapped up to the measurement-window grid).
    let window = run.config.load.window;
    let total_windows = (run.config.duration / window + 1e-9).floor();
    let warmup_end = (0.10 * total_windows).ceil() * window;

    let series: Vec<f64> = run
        .result
        .estimates
        .iter()
        .filter(|r| {
            r.source_id == "east" && r.router_index == 3 && r.period_end_time > warmup_end
        })
        .map(|r| r.e_raw)
        .collect();
    assert!(series.len() > 2500, "series too short: {}", series.len());

    let differenced = forecast::difference(&series, 1).expect("difference");
    let acf = forecast::acf(&differenced, 20).expect("acf");
    assert!(
        acf.values[1].abs() > acf.band,
        "lag-1 autocorrelation {:.4} inside the 95% band {:.4}",
        acf.values[1],
        acf.band
    );
    let inside = (2..=20)
        .filter(|&lag| acf.values[lag].abs() <= acf.band)
        .count();
    assert!(
        inside * 100 >= 19 * 80,
        "only {inside}/19 higher lags inside the band (need >= 80%)"
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "acceptance 5 PASS: lag-1 acf {:.3} beyond the {:.4} band, {inside}/19 \
         higher lags inside ({elapsed:?})",
        acf.values[1], acf.band
    );
}

#[test]
fn acceptance_6_correction_cuts_rmse_and_shrinks_with_period() {
    let start = Instant::now();
    let run = shared_loaded();
    let rows = eval::sweep(&run, &DEFAULT_SWEEP, EvalSplit::default(), None)
        .expect("sweep must succeed");
    let table = tabulate(rows);
    assert_eq!(table.len(), 10, "expected 2 probes x 5 routers");

    let mut worst_margin = f64::INFINITY;
    let mut soft_misses = Vec::new();
    for (key, by_tp) in &table {
        // Hard gate 1: strictly better than raw at the two shortest periods.
        for tp_ms in [200u64, 400] {
            let cell = &by_tp[&tp_ms];
            let raw = cell["raw"].rmse.expect("raw rmse scored");
            let corrected = cell["corrected"].rmse.expect("corrected rmse scored");
            assert!(
                corrected < raw,
                "{key:?} t_P={tp_ms}ms: corrected {corrected:.2} not below raw {raw:.2}"
            );
            worst_margin = worst_margin.min(raw - corrected);
        }
        // Hard gate 2: corrected error must not grow with the period
        // length, up to one noise inversion across the sweep.
        let curve: Vec<f64> = by_tp
            .values()
            .map(|cell| cell["corrected"].rmse.expect("corrected rmse scored"))
            .collect();
        let inversions = curve.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(
            inversions <= 1,
            "{key:?}: corrected rmse not monotone, {inversions} inversions in {curve:?}"
        );
        // Soft target, reported but not gated.
        for (tp_ms, cell) in by_tp {
            if *tp_ms >= 400 {
                let corrected = cell["corrected"].rmse.expect("corrected rmse scored");
                if corrected >= 10.0 {
                    soft_misses.push(format!("{key:?}@{tp_ms}ms={corrected:.1}"));
                }
            }
        }
    }
    if soft_misses.is_empty() {
        println!("acceptance 6 soft target met: corrected rmse < 10 for every period >= 0.4 s");
    } else {
        println!(
            "acceptance 6 soft target missed ({} cells): {}",
            soft_misses.len(),
            soft_misses.join(", ")
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!(
        "acceptance 6 PASS: corrected strictly below raw at 0.2/0.4 s (worst margin \
         {worst_margin:.2}) and nonincreasing across the sweep ({elapsed:?})"
    );
}

#[test]
fn acceptance_7_bias_stays_small_in_every_cell() {
    let start = Instant::now();
    let run = shared_loaded();
    let rows = eval::sweep(&run, &DEFAULT_SWEEP, EvalSplit::default(), None)
        .expect("sweep must succeed");
    let mut worst = 0.0f64;
    let mut cells = 0usize;
    for row in &rows {
        let bias = row.bias.expect("bias scored in every cell");
        assert!(
            bias.abs() < 5.0,
            "{}/{} {} t_P={}: bias {bias:.2} out of bounds",
            row.direction,
            row.router_index,
            row.estimator,
            row.t_p_seconds
        );
        worst = worst.max(bias.abs());
        cells += 1;
    }
    assert_eq!(cells, 100, "expected 5 periods x 10 cells x 2 estimators");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("acceptance 7 PASS: |bias| < 5 in all {cells} cells (worst {worst:.2}) ({elapsed:?})");
}

#[test]
fn acceptance_8_presignalling_multiplies_markable_acks() {
    let start = Instant::now();
    let base = fs::read_to_string(shipped_config("probe_only.toml")).expect("read probe config");
    let base_dir = shipped_config("");
    let on_cfg = config::parse_config(&base, &base_dir).expect("parse presignal config");
    assert!(on_cfg.presignal, "probe-only example must presignal");
    let off_text = base.replace("presignal = true", "presignal = false");
    assert_ne!(off_text, base, "presignal toggle not found");
    let off_cfg = config::parse_config(&off_text, &base_dir).expect("parse sequential config");

    let seed = 7;
    let on = engine::run(&on_cfg, seed).expect("presignal run");
    let off = engine::run(&off_cfg, seed).expect("sequential run");

    // Count acknowledged packets by the router their IPid designates.
    let count = |cfg: &config::SimConfig, result: &RunResult| -> BTreeMap<(String, u8), u64> {
        let params: BTreeMap<&str, ProtocolParams> = cfg
            .probes
            .iter()
            .map(|p| (p.name.as_str(), cfg.protocol_params(p)))
            .collect();
        let mut counts = BTreeMap::new();
        for ack in &result.acks {
            // Sequential-mode IPids mostly designate residues beyond the
            // path; only acks markable at some router count.
            if let Some(attribution) =
                protocol::attribute_router(ack.ipid, &params[ack.source_id.as_str()])
            {
                *counts
                    .entry((ack.source_id.clone(), attribution.router))
                    .or_insert(0u64) += 1;
            }
        }
        counts
    };
    let on_counts = count(&on_cfg, &on);
    let off_counts = count(&off_cfg, &off);

    let mut ratios = Vec::new();
    for probe in &on_cfg.probes {
        for router in 1..=probe.hops() {
            let key = (probe.name.clone(), router);
            let n_on = *on_counts.get(&key).unwrap_or(&0) as f64;
            let n_off = *off_counts.get(&key).unwrap_or(&0) as f64;
            assert!(n_off > 0.0, "{key:?}: no sequential-mode acks");
            let ratio = n_on / n_off;
            assert!(
                (6.0..=6.8).contains(&ratio),
                "{key:?}: markable-ack gain {ratio:.3} outside [6.0, 6.8] \
                 (on {n_on}, off {n_off})"
            );
            ratios.push(ratio);
        }
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "acceptance 8 PASS: per-router markable-ack gain in [{min:.3}, {max:.3}] \
         across {} cells ({elapsed:?})",
        ratios.len()
    );
}

#[test]
fn acceptance_9_conservation_and_bit_reproducibility() {
    // Conservation on the shipped example.
    let shared = shared_run();
    for row in &shared.result.accounting {
        assert_eq!(
            row.enqueued,
            row.dequeued + row.dropped + row.queued_end,
            "link {} leaks packets",
            row.link_id
        );
    }

    // Conservation under deliberate overload, where drops must occur.
    const OVERLOAD: &str = r#"
        [sim]
        duration = 10.0

        [[node]]
        name = "a"
        [[node]]
        name = "b"
        [[node]]
        name = "c"

        [[link]]
        a = "a"
        b = "b"
        capacity = 3000.0
        delay = 0.001
        queue = 40

        [[link]]
        a = "b"
        b = "c"
        capacity = 3000.0
        delay = 0.001
        queue = 40

        [[probe]]
        name = "fwd"
        source = "a"
        dest = "c"
        rate = 100.0

        [[background]]
        name = "burst"
        source = "a"
        dest = "c"
        model = "poisson"
        rate = 6000.0
    "#;
    let over_cfg = config::parse_config(OVERLOAD, Path::new(".")).expect("overload config");
    let first = engine::run(&over_cfg, 4242).expect("overload run");
    let dropped: u64 = first.accounting.iter().map(|r| r.dropped).sum();
    assert!(dropped > 0, "overload scenario produced no drops");
    for row in &first.accounting {
        assert_eq!(
            row.enqueued,
            row.dequeued + row.dropped + row.queued_end,
            "link {} leaks packets under overload",
            row.link_id
        );
    }

    // Identical config and seed must reproduce every artifact byte for
    // byte. The manifest is excluded by construction: it records a
    // wall-clock timestamp and is written separately from the data files.
    let second = engine::run(&over_cfg, 4242).expect("overload rerun");
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    artifacts::write_run_dir(dir_a.path(), &over_cfg.raw_toml, &first).expect("write first");
    artifacts::write_run_dir(dir_b.path(), &over_cfg.raw_toml, &second).expect("write second");
    for file in [
        artifacts::GROUND_TRUTH_FILE,
        artifacts::ESTIMATES_FILE,
        artifacts::ACKS_FILE,
        artifacts::ACCOUNTING_FILE,
        artifacts::PATHS_FILE,
        artifacts::CONFIG_FILE,
    ] {
        let bytes_a = fs::read(dir_a.path().join(file)).expect("read first");
        let bytes_b = fs::read(dir_b.path().join(file)).expect("read second");
        assert_eq!(bytes_a, bytes_b, "{file} differs between identical runs");
    }
    println!(
        "acceptance 9 PASS: conservation holds on every link ({} drops forced) and \
         identical seeds reproduce artifacts byte for byte",
        dropped
    );
}
