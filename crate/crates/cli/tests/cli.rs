//! End-to-end checks of the binary: artifact reproducibility, exit codes,
//! degenerate configs, and run/ensemble consistency.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_fluxon");

const LOOP_CONFIG: &str = r#"
[run]
experiment = "two-fluxon-loop"
seed = 42

[source]
xi = 0.37

[two_fluxon_loop]
windings = 1
default_bath_count = 50
"#;

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("spawn fluxon");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).expect("write");
    p.to_str().unwrap().to_string()
}

fn strip_wall_time(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.starts_with("wall_time_s:"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_artifacts_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", LOOP_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let (code, _, err) = run_cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    let trace_a = std::fs::read(out_a.join("trace.csv")).unwrap();
    let trace_b = std::fs::read(out_b.join("trace.csv")).unwrap();
    assert_eq!(trace_a, trace_b, "traces must be byte-identical");
    let rep_a = std::fs::read_to_string(out_a.join("report.txt")).unwrap();
    let rep_b = std::fs::read_to_string(out_b.join("report.txt")).unwrap();
    assert_eq!(strip_wall_time(&rep_a), strip_wall_time(&rep_b));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", LOOP_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_cli(&["run", "--config", &cfg, "--out", out_a.to_str().unwrap()]);
    run_cli(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "43",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    let rep_a = std::fs::read_to_string(out_a.join("report.txt")).unwrap();
    let rep_b = std::fs::read_to_string(out_b.join("report.txt")).unwrap();
    assert!(rep_a.contains("seed: 42"));
    assert!(rep_b.contains("seed: 43"));
    assert_ne!(
        std::fs::read(out_a.join("trace.csv")).unwrap(),
        std::fs::read(out_b.join("trace.csv")).unwrap(),
        "different seeds must perturb the bath and hence the trace"
    );
}

#[test]
fn invalid_config_names_field_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = r#"
[run]
experiment = "locality-probe"
seed = 1

[locality_probe]
candidates = [0.37]
"#;
    let cfg = write(dir.path(), "bad.toml", bad);
    let (code, _, err) = run_cli(&["validate", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("candidates"), "stderr: {err}");

    let bad_coupling = r#"
[run]
experiment = "two-fluxon-loop"
seed = 1

[source]
xi = 0.37

[[bath.species]]
name = "A"
count = 5
coupling = [1, 1.25]
"#;
    let cfg2 = write(dir.path(), "bad2.toml", bad_coupling);
    let (code2, _, err2) = run_cli(&["run", "--config", &cfg2]);
    assert_eq!(code2, 2);
    assert!(
        err2.contains("coupling") || err2.contains("integer"),
        "stderr: {err2}"
    );
}

#[test]
fn zero_duration_open_run_is_trivial_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = r#"
[run]
experiment = "two-fluxon-open"
seed = 3

[source]
xi = 0.5

[two_fluxon_open]
duration = 0.0
default_bath_count = 10

[two_fluxon_open.path1]
kind = "fixed"
x = 2.0
y = 0.0

[two_fluxon_open.path2]
kind = "fixed"
x = 2.0
y = 0.0
"#;
    let cfg = write(dir.path(), "cfg.toml", cfg_text);
    let out = dir.path().join("out");
    let (code, _, err) = run_cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2, "header plus a single sample");
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("windings: 0"));
    assert!(report.contains("pass: true"));
}

#[test]
fn ensemble_of_one_matches_run_at_member_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", LOOP_CONFIG);
    let ens_out = dir.path().join("ens");
    let (code, _, err) = run_cli(&[
        "ensemble",
        "--config",
        &cfg,
        "--count",
        "1",
        "--out",
        ens_out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(ens_out.join("ensemble_runs.csv")).unwrap();
    let row = csv.lines().nth(1).expect("one member row");
    let fields: Vec<&str> = row.split(',').collect();
    let member_seed = fields[1];
    let residual_ens: f64 = fields[5].parse().unwrap();

    let run_out = dir.path().join("run");
    let (code2, _, err2) = run_cli(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        member_seed,
        "--out",
        run_out.to_str().unwrap(),
    ]);
    assert_eq!(code2, 0, "{err2}");
    let report = std::fs::read_to_string(run_out.join("report.txt")).unwrap();
    let residual_run: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("closure_residual: "))
        .expect("closure_residual line")
        .parse()
        .unwrap();
    assert_eq!(residual_ens, residual_run);
}

#[test]
fn probe_without_bath_flags_high_distinguishability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = r#"
[run]
experiment = "locality-probe"
seed = 2

[policy]
dt = 5e-3

[locality_probe]
candidates = [0.0, 0.37]
ensemble = 100
calibration_splits = 20
default_bath_count = 0
"#;
    let cfg = write(dir.path(), "cfg.toml", cfg_text);
    let out = dir.path().join("out");
    let (code, _, err) = run_cli(&["probe", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let report = std::fs::read_to_string(out.join("probe_report.txt")).unwrap();
    assert!(
        report.contains("local_distinguishability: HIGH"),
        "deterministic gamma must be flagged HIGH:\n{report}"
    );
    assert!(out.join("probe_hist_0.csv").exists());
    assert!(out.join("probe_hist_1.csv").exists());
}

#[test]
fn ensemble_failure_budget_exits_1_but_continues() {
    // Bath particles forced to start inside the collision epsilon of the
    // fluxons: every member aborts, the ensemble lists the failures, and the
    // zero failure budget flips the exit code.
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = r#"
[run]
experiment = "two-fluxon-loop"
seed = 42

[policy]
collision_eps = 0.5

[source]
xi = 0.37

[two_fluxon_loop]
windings = 1

[[bath.species]]
name = "A"
count = 5
coupling = [1, 1]

[bath.species.motion]
kind = "random-waypoints"
speed_cap = 1.0
waypoint_interval = 0.25

[bath.species.motion.region]
kind = "rect"
x0 = 0.9
y0 = -0.1
x1 = 1.1
y1 = 0.1
"#;
    let cfg = write(dir.path(), "cfg.toml", cfg_text);
    let out = dir.path().join("out");
    let (code, _, _) = run_cli(&[
        "ensemble",
        "--config",
        &cfg,
        "--count",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let csv = std::fs::read_to_string(out.join("ensemble_runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus all three members listed");
    assert_eq!(csv.matches(",failed,").count(), 3);
    let report = std::fs::read_to_string(out.join("ensemble_report.txt")).unwrap();
    assert!(report.contains("failed: 3"));
    assert!(report.contains("pass: false"));
}
