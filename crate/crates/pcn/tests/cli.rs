//! Black-box tests of the `pcn` binary: exit codes, artifact layout,
//! determinism, and the text formats the subcommands consume and emit.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PCN_LOG_LEVEL")
        .output()
        .expect("binary must spawn")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no exit code (signal?)")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Three-node chain with one measured direction and light cross-traffic;
/// small enough that a full run takes well under a second.
const CHAIN: &str = r#"
[sim]
duration = 20.0

[protocol]
presignal = true

[[node]]
name = "a"
[[node]]
name = "b"
[[node]]
name = "c"

[[link]]
a = "a"
b = "b"
capacity = 2000.0
delay = 0.001
queue = 200

[[link]]
a = "b"
b = "c"
capacity = 2000.0
delay = 0.001
queue = 200

[[probe]]
name = "probe"
source = "a"
dest = "c"
rate = 80.0

[[background]]
name = "bg"
source = "a"
dest = "c"
model = "poisson"
rate = 400.0
"#;

#[test]
fn run_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("chain.toml"), CHAIN).unwrap();

    let run = pcn(
        &["run", "--config", "chain.toml", "--seed", "5", "--out", "out"],
        tmp.path(),
    );
    assert_eq!(exit_code(&run), 0, "run failed: {}", stderr(&run));
    for file in [
        "ground_truth.csv",
        "estimates.csv",
        "acks.csv",
        "accounting.csv",
        "paths.csv",
        "config.toml",
        "manifest.json",
    ] {
        assert!(
            tmp.path().join("out").join(file).is_file(),
            "missing artifact {file}"
        );
    }
    // The config copy is byte-identical to the input scenario.
    assert_eq!(
        fs::read_to_string(tmp.path().join("out/config.toml")).unwrap(),
        CHAIN
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));

    let eval = pcn(
        &["eval", "--run", "out", "--tp", "0.2,0.4", "--out", "report.csv"],
        tmp.path(),
    );
    assert_eq!(exit_code(&eval), 0, "eval failed: {}", stderr(&eval));
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("t_p_seconds,direction,router_index,estimator,rmse,bias,n_periods")
    );
    // One probe, one router, two periods, two estimators.
    assert_eq!(lines.count(), 4);
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("chain.toml"), CHAIN).unwrap();
    for out in ["one", "two"] {
        let run = pcn(
            &["run", "--config", "chain.toml", "--seed", "99", "--out", out],
            tmp.path(),
        );
        assert_eq!(exit_code(&run), 0, "run failed: {}", stderr(&run));
    }
    for file in ["ground_truth.csv", "estimates.csv", "acks.csv", "accounting.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("one").join(file)).unwrap(),
            fs::read(tmp.path().join("two").join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn gen_trace_output_feeds_back_into_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = pcn(
        &[
            "gen-trace",
            "--model",
            "poisson",
            "--params",
            "rate=400,size=500",
            "--duration",
            "20",
            "--seed",
            "3",
            "--out",
            "bg.trace",
        ],
        tmp.path(),
    );
    assert_eq!(exit_code(&gen), 0, "gen-trace failed: {}", stderr(&gen));

    let trace = fs::read_to_string(tmp.path().join("bg.trace")).unwrap();
    let mut last = -1.0f64;
    let mut lines = 0usize;
    for line in trace.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut fields = line.split_whitespace();
        let time: f64 = fields.next().unwrap().parse().unwrap();
        let size: u64 = fields.next().unwrap().parse().unwrap();
        assert!(time >= last, "timestamps must be nondecreasing");
        assert_eq!(size, 500);
        last = time;
        lines += 1;
    }
    // Poisson at 400/s over 20 s: ~8000 arrivals, give or take.
    assert!((7000..9000).contains(&lines), "unexpected count {lines}");

    let config = CHAIN.replace(
        "model = \"poisson\"\nrate = 400.0",
        "trace = \"bg.trace\"",
    );
    assert_ne!(config, CHAIN);
    fs::write(tmp.path().join("chain.toml"), config).unwrap();
    let run = pcn(
        &["run", "--config", "chain.toml", "--seed", "5", "--out", "out"],
        tmp.path(),
    );
    assert_eq!(exit_code(&run), 0, "trace-driven run failed: {}", stderr(&run));
}

#[test]
fn acf_prints_two_csv_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let series: Vec<String> = (0..60).map(|i| format!("{}", 50 + (i % 7))).collect();
    fs::write(tmp.path().join("series.txt"), series.join("\n")).unwrap();

    let out = pcn(
        &["acf", "--series", "series.txt", "--max-lag", "5"],
        tmp.path(),
    );
    assert_eq!(exit_code(&out), 0, "acf failed: {}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let blocks: Vec<&str> = stdout.trim_end().split("\n\n").collect();
    assert_eq!(blocks.len(), 2, "expected acf and pacf blocks:\n{stdout}");
    assert!(blocks[0].starts_with("lag,acf,band"));
    assert!(blocks[1].starts_with("lag,pacf,band"));
    // Header plus lags 1..=5 in each block.
    assert_eq!(blocks[0].lines().count(), 6);
    assert_eq!(blocks[1].lines().count(), 6);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[sim]\nduration = -3.0\n").unwrap();
    fs::write(tmp.path().join("empty.txt"), "").unwrap();

    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["definitely-not-a-command"], "unknown subcommand"),
        (vec!["run", "--config", "bad.toml", "--seed", "1", "--out", "x"], "invalid scenario"),
        (vec!["eval", "--run", "missing", "--tp", "abc", "--out", "r.csv"], "malformed tp list"),
        (vec!["gen-trace", "--model", "sawtooth", "--params", "rate=1", "--duration", "1", "--seed", "1", "--out", "t"], "unknown model"),
        (vec!["gen-trace", "--model", "poisson", "--params", "rate=1,bogus=2", "--duration", "1", "--seed", "1", "--out", "t"], "stray model parameter"),
        (vec!["acf", "--series", "empty.txt"], "empty series"),
    ];
    for (args, what) in cases {
        let out = pcn(&args, tmp.path());
        assert_eq!(exit_code(&out), 1, "{what}: {:?} -> {}", args, stderr(&out));
    }
}

#[test]
fn missing_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["run", "--config", "nope.toml", "--seed", "1", "--out", "x"], "missing config"),
        (vec!["eval", "--run", "nope", "--out", "r.csv"], "missing run dir"),
        (vec!["acf", "--series", "nope.txt"], "missing series file"),
    ];
    for (args, what) in cases {
        let out = pcn(&args, tmp.path());
        assert_eq!(exit_code(&out), 2, "{what}: {:?} -> {}", args, stderr(&out));
    }
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [vec!["--help"], vec!["--version"], vec!["run", "--help"]] {
        let out = pcn(&args, tmp.path());
        assert_eq!(exit_code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn log_level_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("chain.toml"), CHAIN).unwrap();

    let bad = Command::new(env!("CARGO_BIN_EXE_pcn"))
        .args(["run", "--config", "chain.toml", "--seed", "1", "--out", "x"])
        .current_dir(tmp.path())
        .env("PCN_LOG_LEVEL", "loud")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1), "invalid level must be rejected");
    assert!(stderr(&bad).contains("PCN_LOG_LEVEL"));

    let good = Command::new(env!("CARGO_BIN_EXE_pcn"))
        .args(["run", "--config", "chain.toml", "--seed", "1", "--out", "y"])
        .current_dir(tmp.path())
        .env("PCN_LOG_LEVEL", "debug")
        .output()
        .unwrap();
    assert_eq!(good.status.code(), Some(0), "{}", stderr(&good));
}

#[test]
fn forced_theta_is_range_checked() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("chain.toml"), CHAIN).unwrap();
    let run = pcn(
        &["run", "--config", "chain.toml", "--seed", "5", "--out", "out"],
        tmp.path(),
    );
    assert_eq!(exit_code(&run), 0);

    let eval = pcn(
        &[
            "eval", "--run", "out", "--tp", "0.2", "--force-theta", "1.5", "--out", "r.csv",
        ],
        tmp.path(),
    );
    assert_eq!(exit_code(&eval), 1, "{}", stderr(&eval));
}
