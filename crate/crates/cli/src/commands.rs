//! The four subcommands: `run`, `ensemble`, `probe`, and `validate`.
//!
//! Exit-code contract: 0 when every declared check passes, 1 when a check
//! fails (or the ensemble failure budget is exceeded), 2 for an invalid
//! config, 3 for a simulation abort.

use crate::config::{ConfigError, ExperimentKind, RunConfig};
use crate::report::{config_digest, fmt_f64, histogram_csv, trace_csv, Report};
use fluxon_core::dynamics::StepPolicy;
use fluxon_core::experiments::{
    open_meeting_scenario, run_locality_probe, run_scalar_ab, run_single_fluxon,
    run_three_fluxon, run_two_fluxon_loop, run_two_fluxon_open, ExperimentError,
    LocalityProbeResult,
};
use fluxon_core::geometry::{wrap_to_pm_pi, wrap_to_two_pi};
use fluxon_core::model::derive_seed;
use fluxon_core::stats::{resultant_length, uniformity_test, CircularSample};
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub const TOOL_VERSION: &str = concat!("fluxon ", env!("CARGO_PKG_VERSION"));

#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Simulation(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Config(e) => write!(f, "{e}"),
            CommandError::Simulation(e) => write!(f, "simulation failed: {e}"),
            CommandError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e)
    }
}

impl From<ExperimentError> for CommandError {
    fn from(e: ExperimentError) -> Self {
        CommandError::Simulation(e.to_string())
    }
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Simulation(_) | CommandError::Io(_) => 3,
        }
    }
}

fn effective_seed(config: &RunConfig, seed_override: Option<u64>) -> u64 {
    seed_override.unwrap_or(config.run.seed)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CommandError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Parses and validates a config; the `validate` subcommand.
pub fn cmd_validate(config_text: &str) -> Result<RunConfig, CommandError> {
    Ok(RunConfig::parse(config_text)?)
}

/// Outcome of one experiment run, ready for reporting.
struct RunOutcome {
    /// Key/value pairs specific to the experiment.
    fields: Vec<(String, String)>,
    /// Whether the declared check passed.
    pass: bool,
    trace_csv: String,
    /// Observable used for ensemble circular statistics (mod 2pi).
    mid_observable: f64,
    /// Closure residual checked against the tolerance.
    residual: f64,
    predicted: f64,
    n: i64,
    bath_n: i64,
    /// Final internal angles mod 2pi.
    final_phi: Vec<f64>,
}

fn execute(
    config: &RunConfig,
    seed: u64,
    policy: &StepPolicy,
) -> Result<RunOutcome, CommandError> {
    let stride = config.run.sampling_stride;
    match config.run.experiment {
        ExperimentKind::SingleFluxon => {
            let windings = config
                .single_fluxon
                .as_ref()
                .map(|s| s.windings)
                .unwrap_or(1);
            let xi = config.xi()?;
            let path = fluxon_core::experiments::circle_winding_loop(
                fluxon_core::geometry::Point2::new(1.0, 0.0),
                windings,
                1.0,
            );
            let trace = run_single_fluxon(xi, path, 1.0, policy, stride)?;
            let delta = trace.delta_phi(0);
            let predicted_raw = TAU * windings as f64 * xi;
            let residual = wrap_to_pm_pi(delta - predicted_raw);
            let pass = residual.abs() < policy.closure_tolerance;
            let mid = wrap_to_two_pi(trace.sample_at(0.5).phi[0]);
            Ok(RunOutcome {
                fields: vec![
                    ("windings".into(), windings.to_string()),
                    ("delta_phi".into(), fmt_f64(delta)),
                    ("predicted_mod_2pi".into(), fmt_f64(wrap_to_two_pi(predicted_raw))),
                    ("closure_residual".into(), fmt_f64(residual)),
                    ("tolerance".into(), fmt_f64(policy.closure_tolerance)),
                ],
                pass,
                trace_csv: trace_csv(&trace),
                mid_observable: mid,
                residual,
                predicted: wrap_to_two_pi(predicted_raw),
                n: windings,
                bath_n: 0,
                final_phi: vec![wrap_to_two_pi(trace.last().phi[0])],
                // trace consumed above
            })
        }
        ExperimentKind::TwoFluxonLoop => {
            let windings = config
                .two_fluxon_loop
                .as_ref()
                .map(|s| s.windings)
                .unwrap_or(1);
            let xi = config.xi()?;
            let bath = config.bath(seed)?;
            let res = run_two_fluxon_loop(xi, windings, &bath, seed, policy, stride)?;
            let pass = res.closure_residual.abs() < policy.closure_tolerance;
            let mid = wrap_to_two_pi(res.trace.sample_at(0.5).gamma());
            Ok(RunOutcome {
                fields: vec![
                    ("windings".into(), res.n.turns.to_string()),
                    ("bath_winding".into(), res.bath_winding.turns.to_string()),
                    ("predicted_mod_2pi".into(), fmt_f64(res.predicted)),
                    ("closure_residual".into(), fmt_f64(res.closure_residual)),
                    ("tolerance".into(), fmt_f64(policy.closure_tolerance)),
                ],
                pass,
                trace_csv: trace_csv(&res.trace),
                mid_observable: mid,
                residual: res.closure_residual,
                predicted: res.predicted,
                n: res.n.turns,
                bath_n: res.bath_winding.turns,
                final_phi: res
                    .trace
                    .last()
                    .phi
                    .iter()
                    .map(|&p| wrap_to_two_pi(p))
                    .collect(),
            })
        }
        ExperimentKind::TwoFluxonOpen => {
            let xi = config.xi()?;
            let bath = config.bath(seed)?;
            let section = config.two_fluxon_open.clone().unwrap_or_default();
            let (path1, path2, source_path, duration) = match (&section.path1, &section.path2) {
                (Some(p1), Some(p2)) => {
                    let source = match &section.source_path {
                        Some(s) => s.to_trajectory("two_fluxon_open.source_path")?,
                        None => fluxon_core::model::Trajectory::Fixed {
                            at: fluxon_core::geometry::Point2::new(0.0, 0.0),
                        },
                    };
                    let duration = section.duration.ok_or_else(|| {
                        ConfigError("two_fluxon_open.duration: required with explicit paths".into())
                    })?;
                    (
                        p1.to_trajectory("two_fluxon_open.path1")?,
                        p2.to_trajectory("two_fluxon_open.path2")?,
                        source,
                        duration,
                    )
                }
                (None, None) => open_meeting_scenario(),
                _ => {
                    return Err(ConfigError(
                        "two_fluxon_open.path1/path2: give both paths or neither".into(),
                    )
                    .into())
                }
            };
            let res = run_two_fluxon_open(
                xi, path1, path2, source_path, duration, &bath, seed, policy, stride,
            )?;
            let pass = res.closure_residual.abs() < policy.closure_tolerance;
            let mid = wrap_to_two_pi(res.trace.sample_at(duration / 2.0).gamma());
            Ok(RunOutcome {
                fields: vec![
                    ("windings".into(), res.n.turns.to_string()),
                    ("bath_winding".into(), res.bath_winding.turns.to_string()),
                    ("predicted_mod_2pi".into(), fmt_f64(res.predicted)),
                    ("closure_residual".into(), fmt_f64(res.closure_residual)),
                    ("tolerance".into(), fmt_f64(policy.closure_tolerance)),
                ],
                pass,
                trace_csv: trace_csv(&res.trace),
                mid_observable: mid,
                residual: res.closure_residual,
                predicted: res.predicted,
                n: res.n.turns,
                bath_n: res.bath_winding.turns,
                final_phi: res
                    .trace
                    .last()
                    .phi
                    .iter()
                    .map(|&p| wrap_to_two_pi(p))
                    .collect(),
            })
        }
        ExperimentKind::ThreeFluxon => {
            let xi = config.xi()?;
            let section = config.three_fluxon.as_ref().expect("validated");
            let bath = config.bath(seed)?;
            let res = run_three_fluxon(xi, section.windings, &bath, seed, policy, stride)?;
            let pass = res.closure_residual.abs() < policy.closure_tolerance;
            let n_sum: i64 = res.windings.iter().map(|w| w.turns).sum();
            let mid = wrap_to_two_pi(res.trace.sample_at(0.5).phi_sum());
            Ok(RunOutcome {
                fields: vec![
                    (
                        "windings".into(),
                        format!(
                            "{} {} {}",
                            res.windings[0].turns, res.windings[1].turns, res.windings[2].turns
                        ),
                    ),
                    ("winding_sum".into(), n_sum.to_string()),
                    ("predicted_mod_2pi".into(), fmt_f64(res.predicted)),
                    ("closure_residual".into(), fmt_f64(res.closure_residual)),
                    ("tolerance".into(), fmt_f64(policy.closure_tolerance)),
                ],
                pass,
                trace_csv: trace_csv(&res.trace),
                mid_observable: mid,
                residual: res.closure_residual,
                predicted: res.predicted,
                n: n_sum,
                bath_n: 0,
                final_phi: res
                    .trace
                    .last()
                    .phi
                    .iter()
                    .map(|&p| wrap_to_two_pi(p))
                    .collect(),
            })
        }
        ExperimentKind::ScalarAb => {
            let section = config.scalar_ab.as_ref().expect("validated");
            let bath = config.bath(seed)?;
            let res = run_scalar_ab(section.value, section.dwell, &bath, seed, policy, stride)?;
            let tol = res.quadrature_tolerance + policy.closure_tolerance;
            let pass = res.residual.abs() <= tol;
            let mid_t = 0.5 * (0.5 + section.dwell);
            let mid = wrap_to_two_pi(res.trace.sample_at(mid_t).gamma());
            Ok(RunOutcome {
                fields: vec![
                    ("potential_value".into(), fmt_f64(section.value)),
                    ("dwell".into(), fmt_f64(section.dwell)),
                    ("predicted".into(), fmt_f64(res.predicted)),
                    ("residual".into(), fmt_f64(res.residual)),
                    ("tolerance".into(), fmt_f64(tol)),
                ],
                pass,
                trace_csv: trace_csv(&res.trace),
                mid_observable: mid,
                residual: res.residual,
                predicted: res.predicted,
                n: 0,
                bath_n: 0,
                final_phi: res
                    .trace
                    .last()
                    .phi
                    .iter()
                    .map(|&p| wrap_to_two_pi(p))
                    .collect(),
            })
        }
        ExperimentKind::LocalityProbe => Err(ConfigError(
            "locality-probe configs run through the `probe` subcommand".into(),
        )
        .into()),
    }
}

/// `run`: execute one experiment, write `trace.csv` and `report.txt`.
pub fn cmd_run(
    config_text: &str,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<bool, CommandError> {
    let started = Instant::now();
    let config = RunConfig::parse(config_text)?;
    if config.run.experiment == ExperimentKind::LocalityProbe {
        return cmd_probe(config_text, seed_override, None, out_dir);
    }
    let seed = effective_seed(&config, seed_override);
    let policy = config.policy();
    let outcome = execute(&config, seed, &policy)?;

    let mut report = Report::new();
    report.push("tool_version", TOOL_VERSION);
    report.push("config_digest", config_digest(config_text));
    report.push("experiment", config.run.experiment.to_string());
    report.push("seed", seed.to_string());
    report.push_f64("dt", policy.dt);
    for (k, v) in &outcome.fields {
        report.push(k, v.clone());
    }
    report.push("pass", outcome.pass.to_string());
    report.push_f64("wall_time_s", started.elapsed().as_secs_f64());

    write_file(out_dir, "trace.csv", &outcome.trace_csv)?;
    write_file(out_dir, "report.txt", &report.render())?;
    Ok(outcome.pass)
}

struct MemberRow {
    member: usize,
    seed: u64,
    result: Result<RunOutcome, CommandError>,
}

/// `ensemble`: run `count` members with seeds derived from the master seed,
/// write per-member rows and a deterministic aggregated report.
pub fn cmd_ensemble(
    config_text: &str,
    count: usize,
    parallelism: usize,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<bool, CommandError> {
    let config = RunConfig::parse(config_text)?;
    if config.run.experiment == ExperimentKind::LocalityProbe {
        return Err(ConfigError(
            "locality-probe configs run through the `probe` subcommand".into(),
        )
        .into());
    }
    if count < 1 {
        return Err(ConfigError("count: must be at least 1".into()).into());
    }
    let master = effective_seed(&config, seed_override);
    let policy = config.policy();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| CommandError::Simulation(e.to_string()))?;
    let rows: Vec<MemberRow> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|member| {
                let seed = derive_seed(master, member as u64);
                MemberRow {
                    member,
                    seed,
                    result: execute(&config, seed, &policy),
                }
            })
            .collect()
    });

    // Per-member CSV.
    let k_count = config.fluxon_count();
    let mut csv = String::from("member,seed,status,n,bath_winding,closure_residual,predicted,mid_observable");
    for k in 0..k_count {
        let _ = write!(csv, ",phi_{k}_final_mod_2pi");
    }
    csv.push_str(",detail\n");
    let mut failures = 0usize;
    let mut check_failures = 0usize;
    let mut residuals: Vec<f64> = Vec::new();
    let mut mids: Vec<f64> = Vec::new();
    let mut bath_windings: Vec<i64> = Vec::new();
    let mut final_phis: Vec<Vec<f64>> = vec![Vec::new(); k_count];
    for row in &rows {
        match &row.result {
            Ok(o) => {
                let _ = write!(
                    csv,
                    "{},{},ok,{},{},{},{},{}",
                    row.member,
                    row.seed,
                    o.n,
                    o.bath_n,
                    fmt_f64(o.residual),
                    fmt_f64(o.predicted),
                    fmt_f64(o.mid_observable)
                );
                for k in 0..k_count {
                    let _ = write!(csv, ",{}", fmt_f64(o.final_phi[k]));
                }
                let _ = writeln!(csv, ",{}", if o.pass { "pass" } else { "check-failed" });
                if !o.pass {
                    check_failures += 1;
                }
                residuals.push(o.residual);
                mids.push(o.mid_observable);
                bath_windings.push(o.bath_n);
                for (dest, &phi) in final_phis.iter_mut().zip(&o.final_phi) {
                    dest.push(phi);
                }
            }
            Err(e) => {
                failures += 1;
                let _ = write!(csv, "{},{},failed,,,,,", row.member, row.seed);
                for _ in 0..k_count {
                    csv.push(',');
                }
                let _ = writeln!(csv, ",\"{}\"", e.to_string().replace('"', "'"));
            }
        }
    }

    let mut report = Report::new();
    report.push("tool_version", TOOL_VERSION);
    report.push("config_digest", config_digest(config_text));
    report.push("experiment", config.run.experiment.to_string());
    report.push("master_seed", master.to_string());
    report.push("count", count.to_string());
    report.push("succeeded", (count - failures).to_string());
    report.push("failed", failures.to_string());
    report.push_f64("failure_budget", config.run.max_failure_fraction);
    if !residuals.is_empty() {
        let min = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.push_f64("closure_residual_min", min);
        report.push_f64("closure_residual_max", max);
        report.push_f64("closure_residual_spread", max - min);
        let mid_sample = CircularSample::from_angles(mids.clone());
        let r = resultant_length(&mid_sample).expect("non-empty");
        report.push_f64("mid_observable_resultant", r);
        report.push_f64("mid_observable_circular_variance", 1.0 - r);
        let rayleigh = uniformity_test(&mid_sample, 0.01).expect("non-empty");
        report.push_f64("mid_observable_rayleigh_p", rayleigh.p_value);
        report.push(
            "mid_observable_uniform_at_0.01",
            rayleigh.uniform.to_string(),
        );
        let mut distinct = bath_windings.clone();
        distinct.sort_unstable();
        distinct.dedup();
        report.push("bath_winding_distinct_values", distinct.len().to_string());
        for (k, phis) in final_phis.iter().enumerate() {
            let s = CircularSample::from_angles(phis.clone());
            let var = 1.0 - resultant_length(&s).expect("non-empty");
            report.push_f64(&format!("phi_{k}_final_circular_variance"), var);
        }
    }
    let budget_ok = (failures as f64) <= config.run.max_failure_fraction * count as f64;
    let pass = budget_ok && check_failures == 0 && failures < count;
    report.push("pass", pass.to_string());

    write_file(out_dir, "ensemble_runs.csv", &csv)?;
    write_file(out_dir, "ensemble_report.txt", &report.render())?;
    Ok(pass)
}

fn probe_report(result: &LocalityProbeResult, config_text: &str, master: u64) -> String {
    let mut report = Report::new();
    report.push("tool_version", TOOL_VERSION);
    report.push("config_digest", config_digest(config_text));
    report.push("experiment", "locality-probe");
    report.push("master_seed", master.to_string());
    report.push(
        "candidates",
        result
            .candidates
            .iter()
            .map(|c| fmt_f64(*c))
            .collect::<Vec<_>>()
            .join(" "),
    );
    report.push_f64("segment_fraction", result.segment_fraction);
    report.push("ensemble", result.segment_samples[0].len().to_string());
    report.push("bins", result.bins.to_string());
    report.push("reseeded_members", result.reseeded.to_string());
    for (i, r) in result.segment_resultants.iter().enumerate() {
        report.push_f64(&format!("segment_resultant_{i}"), *r);
    }
    for (i, m) in result.closure_residual_max.iter().enumerate() {
        report.push_f64(&format!("closure_residual_max_{i}"), *m);
    }
    for i in 0..result.candidates.len() {
        for j in (i + 1)..result.candidates.len() {
            report.push_f64(&format!("tv_segment_{i}_{j}"), result.tv_matrix[i][j]);
        }
    }
    report.push_f64("null_threshold_99pct", result.null_threshold);
    report.push_f64("max_pairwise_tv", result.max_pairwise_tv());
    let masked = result.max_pairwise_tv() < result.null_threshold;
    report.push(
        "local_distinguishability",
        if masked { "LOW (masked)" } else { "HIGH" },
    );
    for i in 0..result.candidates.len() {
        for j in (i + 1)..result.candidates.len() {
            let sep = wrap_to_pm_pi(
                TAU * (result.candidates[i] - result.candidates[j]),
            )
            .abs();
            report.push_f64(&format!("closure_separation_{i}_{j}"), sep);
        }
    }
    report.render()
}

/// `probe`: run the locality probe and write its report plus per-candidate
/// histogram files.
pub fn cmd_probe(
    config_text: &str,
    seed_override: Option<u64>,
    parallelism: Option<usize>,
    out_dir: &Path,
) -> Result<bool, CommandError> {
    let config = RunConfig::parse(config_text)?;
    let section = config
        .locality_probe
        .as_ref()
        .ok_or_else(|| ConfigError("locality_probe: section required".into()))?;
    let master = effective_seed(&config, seed_override);
    let policy = config.policy();
    let bath = config.bath(master)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .map_err(|e| CommandError::Simulation(e.to_string()))?;
    let result = pool.install(|| {
        run_locality_probe(
            &section.candidates,
            section.segment_fraction,
            section.ensemble,
            &bath,
            master,
            &policy,
            section.bins,
            section.calibration_splits,
        )
    })?;

    for (i, sample) in result.segment_samples.iter().enumerate() {
        let probs = sample
            .histogram(result.bins)
            .expect("validated bins and non-empty samples");
        let width = TAU / result.bins as f64;
        let rows: Vec<(f64, f64)> = probs
            .iter()
            .enumerate()
            .map(|(b, &p)| (b as f64 * width, p))
            .collect();
        write_file(out_dir, &format!("probe_hist_{i}.csv"), &histogram_csv(&rows))?;
    }
    let report = probe_report(&result, config_text, master);
    write_file(out_dir, "probe_report.txt", &report)?;

    let closure_ok = result
        .closure_residual_max
        .iter()
        .all(|&m| m < policy.closure_tolerance);
    Ok(closure_ok)
}
