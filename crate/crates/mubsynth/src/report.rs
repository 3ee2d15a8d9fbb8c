//! CSV and text emitters.
//!
//! All numbers use Rust's shortest round-trip decimal formatting — no locale,
//! no precision loss. Column layouts are fixed; golden-file tests pin them.

use std::fmt::Write as _;
use std::path::Path;

use crate::{IoLayerError, Result};
use mubsynth_core::chipscan::ChipSweepResult;
use mubsynth_core::mub::{BasisState, ProbabilityTables};
use mubsynth_core::qkd::{QkdReport, SigmaTrials};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| IoLayerError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Shortest round-trip decimal; scientific notation outside a readable
/// magnitude band. Either form parses back to the identical f64.
fn fmt_f64(value: f64) -> String {
    if value == 0.0 {
        // fold -0.0 into 0
        return "0".to_string();
    }
    let magnitude = value.abs();
    if magnitude < 1e-4 || magnitude >= 1e16 {
        format!("{value:e}")
    } else {
        format!("{value}")
    }
}

/// Probability tables as a flat CSV with columns `p,m,n,q,D,P`, one row per
/// `(p, m, q, n)` in lexicographic order. Undefined conditionals are `nan`.
pub fn probability_csv(tables: &ProbabilityTables) -> String {
    let mut out = String::from("p,m,n,q,D,P\n");
    for p in 0..tables.bases() {
        for m in 0..tables.bases() {
            for q in 0..tables.dim() {
                for n in 0..tables.dim() {
                    let detection = fmt_f64(tables.detection(p, m, n));
                    if tables.is_defined(p, m, n) {
                        let conditional = fmt_f64(tables.postselected(p, m, q, n));
                        let _ = writeln!(out, "{p},{m},{n},{q},{detection},{conditional}");
                    } else {
                        let _ = writeln!(out, "{p},{m},{n},{q},{detection},nan");
                    }
                }
            }
        }
    }
    out
}

pub fn write_probability_csv(path: &Path, tables: &ProbabilityTables) -> Result<()> {
    write_file(path, &probability_csv(tables))
}

/// Basis states as `m,n,k,probability,phase` rows (per-bin occupation
/// probability and phase in radians), matching how solutions are usually
/// plotted.
pub fn states_csv(states: &[BasisState]) -> String {
    let mut out = String::from("m,n,k,probability,phase\n");
    for state in states {
        for (k, amp) in state.amplitudes().iter().enumerate() {
            let probability = fmt_f64(amp.norm_sqr());
            let phase = fmt_f64(amp.arg());
            let _ = writeln!(
                out,
                "{},{},{k},{probability},{phase}",
                state.basis(),
                state.index()
            );
        }
    }
    out
}

pub fn write_states_csv(path: &Path, states: &[BasisState]) -> Result<()> {
    write_file(path, &states_csv(states))
}

/// Monte-Carlo sweep as `sigma,qber_mean,qber_std,skf_mean,skf_std,trials,failed_trials`.
pub fn qkd_csv(report: &QkdReport) -> String {
    let mut out = String::from("sigma,qber_mean,qber_std,skf_mean,skf_std,trials,failed_trials\n");
    for s in &report.per_sigma {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(s.sigma),
            fmt_f64(s.qber_mean),
            fmt_f64(s.qber_std),
            fmt_f64(s.skf_mean),
            fmt_f64(s.skf_std),
            s.trials,
            s.failed_trials
        );
    }
    out
}

pub fn write_qkd_csv(path: &Path, report: &QkdReport) -> Result<()> {
    write_file(path, &qkd_csv(report))
}

/// Full per-trial dump behind the verbosity flag: a TOML document with one
/// array of `(qber, skf)` pairs per sigma; failed trials appear as `nan`s.
pub fn trials_toml(report: &QkdReport, trials: &[SigmaTrials]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source_solution = {:?}", report.source_solution);
    let _ = writeln!(out, "dim = {}", report.dim);
    for t in trials {
        let _ = writeln!(out, "\n[[sigma]]");
        let _ = writeln!(out, "value = {}", fmt_f64(t.sigma));
        let qbers: Vec<String> = t
            .outcomes
            .iter()
            .map(|o| o.map_or("nan".to_string(), |(q, _)| fmt_f64(q)))
            .collect();
        let skfs: Vec<String> = t
            .outcomes
            .iter()
            .map(|o| o.map_or("nan".to_string(), |(_, r)| fmt_f64(r)))
            .collect();
        let _ = writeln!(out, "qber = [{}]", qbers.join(", "));
        let _ = writeln!(out, "skf = [{}]", skfs.join(", "));
    }
    out
}

pub fn write_trials_toml(path: &Path, report: &QkdReport, trials: &[SigmaTrials]) -> Result<()> {
    write_file(path, &trials_toml(report, trials))
}

/// Chip sweep as `K,epsilon_mse` rows with the untruncated error in a
/// leading comment line.
pub fn chipscan_csv(sweep: &ChipSweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# full_mse = {}", fmt_f64(sweep.full_mse));
    let _ = writeln!(out, "K,epsilon_mse");
    for (k, mse) in sweep.chip_counts.iter().zip(&sweep.mse) {
        let _ = writeln!(out, "{k},{}", fmt_f64(*mse));
    }
    out
}

pub fn write_chipscan_csv(path: &Path, sweep: &ChipSweepResult) -> Result<()> {
    write_file(path, &chipscan_csv(sweep))
}
