//! Aggregates run sidecars under a directory into one long-format table.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::output::{fmt_f64, write_file, ResultSummary, Table, SIDECAR};
use super::sweep::RUNS_DIR;
use super::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> HarnessResult<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(HarnessError::Config(format!(
                "format: unknown format `{other}`"
            ))),
        }
    }
}

/// One metric of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Run directory relative to the report root, `.` for the root itself.
    pub run: String,
    pub experiment: String,
    pub optimizer: String,
    pub config_hash: String,
    pub seed: u64,
    pub diverged: bool,
    pub metric: String,
    pub value: f64,
}

/// Sidecars at `dir/run.json` and `dir/runs/*/run.json`, sorted by run
/// directory name.
pub fn collect(dir: &Path) -> HarnessResult<Vec<(String, ResultSummary)>> {
    let mut found = Vec::new();
    let root = dir.join(SIDECAR);
    if root.is_file() {
        found.push((".".to_string(), ResultSummary::read(&root)?));
    }
    let runs = dir.join(RUNS_DIR);
    if runs.is_dir() {
        let entries = std::fs::read_dir(&runs).map_err(|e| HarnessError::Read {
            path: runs.clone(),
            message: e.to_string(),
        })?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(SIDECAR).is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            let summary = ResultSummary::read(&runs.join(&name).join(SIDECAR))?;
            found.push((format!("{RUNS_DIR}/{name}"), summary));
        }
    }
    if found.is_empty() {
        return Err(HarnessError::Read {
            path: dir.to_path_buf(),
            message: format!("no {SIDECAR} found here or under {RUNS_DIR}/"),
        });
    }
    Ok(found)
}

pub fn rows(found: &[(String, ResultSummary)]) -> Vec<ReportRow> {
    found
        .iter()
        .flat_map(|(run, s)| {
            s.metrics.iter().map(move |(metric, &value)| ReportRow {
                run: run.clone(),
                experiment: s.experiment.clone(),
                optimizer: s.optimizer.clone(),
                config_hash: s.config_hash.clone(),
                seed: s.seed,
                diverged: s.diverged,
                metric: metric.clone(),
                value,
            })
        })
        .collect()
}

pub fn render(rows: &[ReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(rows).expect("report rows serialize") + "\n"
        }
        ReportFormat::Csv => {
            let mut table = Table::new([
                "run",
                "experiment",
                "optimizer",
                "config_hash",
                "seed",
                "diverged",
                "metric",
                "value",
            ]);
            for r in rows {
                table.push(vec![
                    r.run.clone(),
                    r.experiment.clone(),
                    r.optimizer.clone(),
                    r.config_hash.clone(),
                    r.seed.to_string(),
                    r.diverged.to_string(),
                    r.metric.clone(),
                    fmt_f64(r.value),
                ]);
            }
            table.to_csv()
        }
    }
}

/// Writes `dir/report.{csv,json}` and returns its path.
pub fn emit_report(dir: &Path, format: ReportFormat) -> HarnessResult<PathBuf> {
    let found = collect(dir)?;
    let path = dir.join(format!("report.{}", format.extension()));
    write_file(&path, &render(&rows(&found), format))?;
    Ok(path)
}
