//! Report structures and the three output formats.

use std::io::Write;

use clap::ValueEnum;
use pmtp_core::crossfit::FoldReport;
use serde::Serialize;

/// Bumped whenever a JSON field is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyResult {
    pub label: String,
    pub policy: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub image_proportion: f64,
    pub n: usize,
    pub n_target: usize,
    pub n_effective: f64,
    pub folds: Vec<FoldReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub influence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub estimator: &'static str,
    pub n_rows_read: usize,
    pub n_obs: usize,
    pub n_dropped_incomplete: usize,
    pub n_missing_treatment: usize,
    pub n_in_population: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub stratified_folds: bool,
    pub weighted: bool,
    pub results: Vec<PolicyResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub scenario: String,
    pub policy: String,
    pub s_only: bool,
    pub n_mc: u64,
    pub seed: u64,
    pub psi: f64,
    pub mc_se: f64,
    pub n_used: u64,
    pub registered_psi: Option<f64>,
    pub registered_source: Option<String>,
}

/// R-style compact number: four decimals, or one significant digit in
/// scientific notation for small magnitudes.
fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        format!("{v:.4}")
    }
}

fn pct(v: f64) -> String {
    format!("{:.0}%", 100.0 * v)
}

pub fn write_estimate(out: &mut dyn Write, r: &EstimateReport, format: Format) -> std::io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, r)?;
            writeln!(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "policy", "spec", "estimate", "std_error", "ci_lower", "ci_upper", "image_proportion", "n", "n_target",
            ])?;
            for p in &r.results {
                w.write_record([
                    p.label.clone(),
                    p.policy.clone(),
                    format!("{:?}", p.estimate),
                    format!("{:?}", p.std_error),
                    format!("{:?}", p.ci_lower),
                    format!("{:?}", p.ci_upper),
                    format!("{:?}", p.image_proportion),
                    p.n.to_string(),
                    p.n_target.to_string(),
                ])?;
            }
            w.flush()
        }
        Format::Table => {
            let rule = "-".repeat(50);
            writeln!(out, "Summary of Proximal MTP Estimation")?;
            writeln!(out, "{rule}")?;
            writeln!(out, "Number of observations: {}", r.n_obs)?;
            let share = if r.n_obs > 0 { r.n_in_population as f64 / r.n_obs as f64 } else { 0.0 };
            writeln!(out, "Number in target population: {} ({})", r.n_in_population, pct(share))?;
            for p in &r.results {
                writeln!(out, "-Proportion in the image of {}: {}", p.label, pct(p.image_proportion))?;
            }
            writeln!(out, "{rule}")?;
            writeln!(out, "Proximal Estimators and 95% Confidence Intervals")?;
            writeln!(out, "{rule}")?;
            writeln!(out, "Estimator: {}", r.estimator)?;
            let width = r.results.iter().map(|p| p.label.len()).max().unwrap_or(0);
            writeln!(
                out,
                "{:width$} {:>9} {:>9} {:>9} {:>9}",
                "", "Estimate", "Std.Error", "CI.Lower", "CI.Upper"
            )?;
            for p in &r.results {
                writeln!(
                    out,
                    "{:width$} {:>9} {:>9} {:>9} {:>9}",
                    p.label,
                    num(p.estimate),
                    num(p.std_error),
                    num(p.ci_lower),
                    num(p.ci_upper)
                )?;
            }
            for p in &r.results {
                writeln!(out, "{}: {}", p.label, p.policy)?;
            }
            Ok(())
        }
    }
}

pub fn write_truth(out: &mut dyn Write, r: &TruthReport, format: Format) -> std::io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, r)?;
            writeln!(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["scenario", "psi", "mc_se", "n_mc", "seed", "registered_psi"])?;
            w.write_record([
                r.scenario.clone(),
                format!("{:?}", r.psi),
                format!("{:?}", r.mc_se),
                r.n_mc.to_string(),
                r.seed.to_string(),
                r.registered_psi.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
            w.flush()
        }
        Format::Table => {
            writeln!(out, "{}: {:.5} ± {:.5} (n_mc = {}, seed = {})", r.scenario, r.psi, r.mc_se, r.n_mc, r.seed)?;
            if let (Some(v), Some(src)) = (r.registered_psi, &r.registered_source) {
                writeln!(out, "registered: {v} ({src})")?;
            }
            Ok(())
        }
    }
}
