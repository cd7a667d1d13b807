//! Trace tables, report records, and histogram files. All floating-point
//! values are printed with 17 significant digits so artifacts round-trip
//! bit for bit.

use fluxon_core::dynamics::ExperimentTrace;
use fluxon_core::geometry::wrap_to_two_pi;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

/// 17-significant-digit scientific notation; exact for f64 round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn config_digest(config_text: &str) -> String {
    let hash = Sha256::digest(config_text.as_bytes());
    let mut out = String::with_capacity(2 * hash.len());
    for b in hash {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Trace CSV: one sample per line; per fluxon the position, unwrapped source
/// angle, unwrapped internal angle, and wrapped internal angle; then `gamma`
/// for two fluxons or `phi_sum` for three.
pub fn trace_csv(trace: &ExperimentTrace) -> String {
    let k_count = trace.first().phi.len();
    let mut out = String::new();
    out.push('t');
    for k in 0..k_count {
        let _ = write!(
            out,
            ",x_{k},y_{k},theta_{k},phi_{k},phi_{k}_mod_2pi"
        );
    }
    if k_count == 2 {
        out.push_str(",gamma");
    } else if k_count > 2 {
        out.push_str(",phi_sum");
    }
    out.push('\n');
    for s in &trace.samples {
        let _ = write!(out, "{}", fmt_f64(s.t));
        for k in 0..k_count {
            let _ = write!(
                out,
                ",{},{},{},{},{}",
                fmt_f64(s.positions[k].x),
                fmt_f64(s.positions[k].y),
                fmt_f64(s.theta[k]),
                fmt_f64(s.phi[k]),
                fmt_f64(wrap_to_two_pi(s.phi[k]))
            );
        }
        if k_count == 2 {
            let _ = write!(out, ",{}", fmt_f64(s.gamma()));
        } else if k_count > 2 {
            let _ = write!(out, ",{}", fmt_f64(s.phi_sum()));
        }
        out.push('\n');
    }
    out
}

/// A structured-text report: `key: value` lines in a stable order.
#[derive(Debug, Default, Clone)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k}: {v}");
        }
        out
    }
}

/// Histogram CSV for plot-ready output: bin lower edge and probability mass.
pub fn histogram_csv(edges_probs: &[(f64, f64)]) -> String {
    let mut out = String::from("bin_lower_edge,probability\n");
    for (edge, p) in edges_probs {
        let _ = writeln!(out, "{},{}", fmt_f64(*edge), fmt_f64(*p));
    }
    out
}
