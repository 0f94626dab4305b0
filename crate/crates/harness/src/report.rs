//! Report structures and emission: CSV rows per (level, statistic), a JSON
//! mirror of the full report, and plot-ready `(log h, log error)` files.
//!
//! Timestamps and durations live in a separate metadata block so that the
//! report payload is byte-identical across reruns of the same config + seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::OutputFormat;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level_index: usize,
    pub n_x: usize,
    pub h: f64,
    /// value at or below the solver/statistical floor; excluded from fits
    pub floored: bool,
    pub stats: Vec<StatValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub statistic: String,
    pub slope: f64,
    pub pair_orders: Vec<f64>,
}

/// Convergence study outcome: per-level error statistics, fitted orders and
/// the pass verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub study: String,
    pub reference: String,
    pub order: usize,
    pub paths: usize,
    pub seed: u64,
    pub noise_fingerprint: String,
    pub levels: Vec<LevelReport>,
    pub slopes: Vec<SlopeReport>,
    pub pass: bool,
    pub pass_rule: String,
    pub warnings: Vec<String>,
    pub config_echo: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub pass: bool,
    pub config_echo: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorEntry {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub entries: Vec<TaylorEntry>,
    pub pass: bool,
    pub config_echo: String,
}

/// Run metadata, deliberately kept outside the deterministic payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub created_unix_ms: u128,
    pub duration_ms: u128,
    pub tool_version: String,
}

impl RunMetadata {
    pub fn now(duration_ms: u128) -> Self {
        Self {
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            duration_ms,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<R> {
    pub metadata: RunMetadata,
    pub report: R,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ReportError::Unwritable {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut f = fs::File::create(path).map_err(|source| ReportError::Unwritable {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(contents.as_bytes())
        .map_err(|source| ReportError::Unwritable {
            path: path.to_path_buf(),
            source,
        })
}

/// CSV schema: one row per (level, statistic).
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("level_index,h,n_x,statistic_name,value,std_error\n");
    for level in &report.levels {
        for stat in &level.stats {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                level.level_index, level.h, level.n_x, stat.name, stat.value, stat.std_error
            ));
        }
    }
    out
}

/// Two-column `(ln h, ln value)` plot data for one statistic.
pub fn plot_data(report: &ConvergenceReport, statistic: &str) -> String {
    let mut out = String::from("# ln_h ln_value\n");
    for level in &report.levels {
        if let Some(stat) = level.stats.iter().find(|s| s.name == statistic) {
            if stat.value > 0.0 {
                out.push_str(&format!("{} {}\n", level.h.ln(), stat.value.ln()));
            }
        }
    }
    out
}

/// Writes the convergence report under `dir` in the requested format plus
/// the plot files, and returns the emitted paths.
pub fn emit_convergence(
    report: &ConvergenceReport,
    metadata: &RunMetadata,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    let base = dir.join(&report.study);
    match format {
        OutputFormat::Csv => {
            let path = base.with_extension("csv");
            write_file(&path, &convergence_csv(report))?;
            written.push(path);
        }
        OutputFormat::Json => {
            let path = base.with_extension("json");
            let envelope = ReportEnvelope {
                metadata: metadata.clone(),
                report: report.clone(),
            };
            write_file(&path, &serde_json::to_string_pretty(&envelope)?)?;
            written.push(path);
        }
    }
    let mut stats: Vec<&str> = Vec::new();
    for level in &report.levels {
        for s in &level.stats {
            if s.name.ends_with("_rms") && !stats.contains(&s.name.as_str()) {
                stats.push(&s.name);
            }
        }
    }
    for stat in stats {
        let path = dir.join(format!("{}_{}.dat", report.study, stat));
        write_file(&path, &plot_data(report, stat))?;
        written.push(path);
    }
    Ok(written)
}

/// Any report the harness can emit.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyReport {
    Convergence(ConvergenceReport),
    Validation(ValidationReport),
    Taylor(TaylorReport),
}

/// Writes a report under `dir` in the requested format (plus plot data for
/// convergence studies) and returns the emitted paths.
pub fn emit_report(
    report: &StudyReport,
    metadata: &RunMetadata,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    match report {
        StudyReport::Convergence(r) => emit_convergence(r, metadata, dir, format),
        StudyReport::Validation(r) => emit_validation(r, metadata, dir, format),
        StudyReport::Taylor(r) => emit_taylor(r, metadata, dir, format),
    }
}

fn rows_csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn emit_validation(
    report: &ValidationReport,
    metadata: &RunMetadata,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    let base = dir.join("validation");
    let path = match format {
        OutputFormat::Csv => {
            let csv = rows_csv(
                "name,pass,value,threshold",
                report
                    .entries
                    .iter()
                    .map(|e| format!("{},{},{},{}", e.name, e.pass, e.value, e.threshold)),
            );
            let path = base.with_extension("csv");
            write_file(&path, &csv)?;
            path
        }
        OutputFormat::Json => {
            let path = base.with_extension("json");
            let envelope = ReportEnvelope {
                metadata: metadata.clone(),
                report: report.clone(),
            };
            write_file(&path, &serde_json::to_string_pretty(&envelope)?)?;
            path
        }
    };
    Ok(vec![path])
}

pub fn emit_taylor(
    report: &TaylorReport,
    metadata: &RunMetadata,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    let base = dir.join("taylor");
    let path = match format {
        OutputFormat::Csv => {
            let csv = rows_csv(
                "name,pass,value,lower,upper",
                report
                    .entries
                    .iter()
                    .map(|e| format!("{},{},{},{},{}", e.name, e.pass, e.value, e.lower, e.upper)),
            );
            let path = base.with_extension("csv");
            write_file(&path, &csv)?;
            path
        }
        OutputFormat::Json => {
            let path = base.with_extension("json");
            let envelope = ReportEnvelope {
                metadata: metadata.clone(),
                report: report.clone(),
            };
            write_file(&path, &serde_json::to_string_pretty(&envelope)?)?;
            path
        }
    };
    Ok(vec![path])
}
