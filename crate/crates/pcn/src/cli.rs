//! Command-line front end tying simulation, evaluation and the series
//! utilities into reproducible experiments.
//!
//! Subcommands:
//!
//! - `run --config <file> --seed <n> --out <dir>` — simulate a scenario
//!   and write the artifact CSVs plus a provenance manifest.
//! - `eval --run <dir> [--tp <list>] [--force-theta <θ>] --out <file>` —
//!   replay a run's acknowledgement log at several period lengths and
//!   score the raw and corrected predictors.
//! - `acf --series <file> [--diff <d>] [--max-lag <K>]` — print the
//!   autocorrelation and partial autocorrelation of a series (one value
//!   per line) to stdout as two CSV blocks.
//! - `gen-trace --model <name> --params <k=v,…> --duration <s> --seed <n>
//!   --out <file>` — materialise a synthetic arrival trace.
//!
//! Exit codes: 0 on success, 1 for validation problems (bad flags,
//! malformed scenarios or inputs), 2 for runtime failures (I/O and
//! friends). `PCN_LOG_LEVEL` ∈ {error, info, debug} controls logging;
//! an unrecognised value is itself a validation failure.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::eval::{self, EvalSplit};
use crate::forecast;
use crate::sim::artifacts::{self, RunManifest};
use crate::sim::config::load_config;
use crate::sim::engine;
use crate::sim::trace::{gen_synthetic_trace, save_trace, SynthModel};
use crate::{Error, Result};

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pcn",
    version,
    about = "One-bit probabilistic congestion notification: simulator and analysis tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write run artifacts.
    Run(RunArgs),
    /// Score raw vs. corrected load predictions from a finished run.
    Eval(EvalArgs),
    /// Autocorrelation diagnostics for a plain series file.
    Acf(AcfArgs),
    /// Generate a synthetic arrival trace file.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for the artifact CSVs and manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory produced by `pcn run`.
    #[arg(long)]
    run: PathBuf,
    /// Comma-separated period lengths in seconds (default 0.2,0.4,0.8,1.6,3.2).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    tp: Option<Vec<f64>>,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Override the fitted correction coefficient (0 makes the corrected
    /// column reproduce the raw one exactly).
    #[arg(long)]
    force_theta: Option<f64>,
}

#[derive(Debug, Args)]
struct AcfArgs {
    /// Series file, one numeric value per line.
    #[arg(long)]
    series: PathBuf,
    /// Differencing order applied before the analysis.
    #[arg(long, default_value_t = 0)]
    diff: usize,
    /// Largest lag to report.
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    /// Arrival model: poisson | onoff-mmpp.
    #[arg(long)]
    model: String,
    /// Model parameters as comma-separated key=value pairs, e.g.
    /// "rate=1000" or "rate_on=3600,rate_off=400,mean_on=24,mean_off=36";
    /// optional "size=<bytes>" sets the packet size (default 1000).
    #[arg(long, default_value = "")]
    params: String,
    /// Trace length in seconds.
    #[arg(long)]
    duration: f64,
    /// Seed for the arrival process.
    #[arg(long)]
    seed: u64,
    /// Trace file to write.
    #[arg(long)]
    out: PathBuf,
}

/// Parse arguments, run, and translate the outcome into an exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Err(message) = init_logging() {
        eprintln!("error: {message}");
        return EXIT_VALIDATION;
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; they are not failures.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Acf(args) => cmd_acf(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn init_logging() -> std::result::Result<(), String> {
    let level = match std::env::var("PCN_LOG_LEVEL") {
        Ok(v) => match v.as_str() {
            "error" | "info" | "debug" => v,
            other => {
                return Err(format!(
                    "PCN_LOG_LEVEL must be one of error, info, debug; got {other:?}"
                ))
            }
        },
        Err(_) => "error".to_string(),
    };
    // Tests may call the entry point repeatedly in one process; a second
    // init attempt is harmless.
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init();
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    log::info!(
        "simulating {} for {}s with {} probes and {} background flows",
        args.config.display(),
        config.duration,
        config.probes.len(),
        config.backgrounds.len()
    );
    let result = engine::run(&config, args.seed)?;
    artifacts::write_run_dir(&args.out, &config.raw_toml, &result)?;
    let manifest = RunManifest {
        config: args.config.display().to_string(),
        seed: args.seed,
        out_dir: args.out.display().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    artifacts::write_manifest(&args.out, &manifest)?;
    log::info!(
        "wrote {} ground-truth rows, {} estimates, {} acks to {}",
        result.ground_truth.len(),
        result.estimates.len(),
        result.acks.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let run = eval::load_run(&args.run)?;
    let t_ps = args.tp.unwrap_or_else(|| eval::DEFAULT_SWEEP.to_vec());
    let rows = eval::sweep(&run, &t_ps, EvalSplit::default(), args.force_theta)?;
    eval::write_report(&args.out, &rows)?;
    log::info!("wrote {} report rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_acf(args: AcfArgs) -> Result<()> {
    let series = read_series(&args.series)?;
    let diffed = forecast::difference(&series, args.diff)?;
    let acf = forecast::acf(&diffed, args.max_lag)?;
    let pacf = forecast::pacf(&diffed, args.max_lag)?;

    let mut out = String::new();
    out.push_str("lag,acf,band\n");
    for lag in 1..=args.max_lag {
        out.push_str(&format!("{lag},{},{}\n", acf.values[lag], acf.band));
    }
    out.push('\n');
    out.push_str("lag,pacf,band\n");
    for lag in 1..=args.max_lag {
        out.push_str(&format!("{lag},{},{}\n", pacf.values[lag], pacf.band));
    }
    print!("{out}");
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<()> {
    let mut params = parse_params(&args.params)?;
    let size = match params.remove("size") {
        None => 1000u32,
        Some(v) if v >= 1.0 && v <= u32::MAX as f64 && v.fract() == 0.0 => v as u32,
        Some(v) => {
            return Err(Error::Config(format!(
                "size must be a positive whole number of bytes, got {v}"
            )))
        }
    };
    let mut take = |key: &str| {
        params.remove(key).ok_or_else(|| {
            Error::Config(format!("model {:?} needs parameter {key}", args.model))
        })
    };
    let model = match args.model.as_str() {
        "poisson" => SynthModel::Poisson { rate: take("rate")? },
        "onoff-mmpp" => SynthModel::OnOffMmpp {
            rate_on: take("rate_on")?,
            rate_off: take("rate_off")?,
            mean_on: take("mean_on")?,
            mean_off: take("mean_off")?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown model {other:?} (expected poisson or onoff-mmpp)"
            )))
        }
    };
    if let Some(stray) = params.keys().next() {
        return Err(Error::Config(format!(
            "parameter {stray:?} does not apply to model {:?}",
            args.model
        )));
    }
    let trace = gen_synthetic_trace(model, args.duration, args.seed, size)?;
    save_trace(&args.out, &trace)?;
    log::info!(
        "wrote {} arrivals to {}",
        trace.records.len(),
        args.out.display()
    );
    Ok(())
}

fn read_series(path: &PathBuf) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read {}: {e}", path.display()),
            ))
        })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::Series(format!(
                "{}:{}: not a number: {line:?}",
                path.display(),
                i + 1
            ))
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Series(format!(
            "{} contains no values",
            path.display()
        )));
    }
    Ok(values)
}

fn parse_params(text: &str) -> Result<HashMap<String, f64>> {
    let mut map = HashMap::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::Config(format!("parameter {part:?} is not of the form key=value"))
        })?;
        let parsed: f64 = value.trim().parse().map_err(|_| {
            Error::Config(format!("parameter {key} has non-numeric value {value:?}"))
        })?;
        if map.insert(key.trim().to_string(), parsed).is_some() {
            return Err(Error::Config(format!("parameter {key} given twice")));
        }
    }
    Ok(map)
}
