//! File emission: CSV tables with 17 significant digits and JSON sidecars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{HarnessError, HarnessResult};
use crate::testbed::online::RegretPoint;
use crate::testbed::TrajectoryRecord;

/// Name of the per-run sidecar.
pub const SIDECAR: &str = "run.json";

/// Seeded generator used for every random draw, recorded in sidecars.
pub const RNG_NAME: &str = "chacha8";

/// 17 significant digits, enough to re-parse the exact double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ensure_dir(dir: &Path) -> HarnessResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> HarnessResult<()> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A CSV table assembled in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> HarnessResult<()> {
        write_file(path, &self.to_csv())
    }
}

pub fn trajectory_table(records: &[TrajectoryRecord]) -> Table {
    let dim = records.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["step".to_string(), "loss".to_string()];
    header.extend((0..dim).map(|i| format!("theta_{i}")));
    header.extend(["grad_norm", "lr", "psi_min", "psi_max"].map(String::from));
    let mut table = Table::new(header);
    for r in records {
        let mut row = vec![r.step.to_string(), fmt_f64(r.loss)];
        row.extend(r.theta.iter().map(|&x| fmt_f64(x)));
        row.extend([r.grad_norm, r.lr, r.psi_min, r.psi_max].map(fmt_f64));
        table.push(row);
    }
    table
}

pub fn regret_table(points: &[RegretPoint]) -> Table {
    let mut table = Table::new(["t", "regret", "avg_regret"]);
    for p in points {
        table.push(vec![
            p.t.to_string(),
            fmt_f64(p.regret),
            fmt_f64(p.avg_regret),
        ]);
    }
    table
}

/// Grid matrix: the first row holds the `u` axis, each further row starts
/// with its `v` coordinate.
pub fn grid_table(us: &[f64], vs: &[f64], values: &[Vec<f64>]) -> Table {
    let mut header = vec!["v\\u".to_string()];
    header.extend(us.iter().map(|&u| fmt_f64(u)));
    let mut table = Table::new(header);
    for (v, row) in vs.iter().zip(values) {
        let mut line = vec![fmt_f64(*v)];
        line.extend(row.iter().map(|&x| fmt_f64(x)));
        table.push(line);
    }
    table
}

/// What every run directory carries next to its data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub experiment: String,
    pub optimizer: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub rng: String,
    pub version: String,
    pub diverged: bool,
    /// Headline numbers, each recomputable from the emitted files.
    pub metrics: BTreeMap<String, f64>,
    /// Data files described by this sidecar, relative to the run directory.
    pub files: Vec<String>,
}

impl ResultSummary {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment.to_string(),
            optimizer: config.optimizer.to_string(),
            config: config.clone(),
            config_hash: config.hash(),
            seed: config.seed,
            rng: RNG_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            diverged: false,
            metrics: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    /// Records a metric; non-finite values are left out since JSON cannot
    /// carry them.
    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(key.into(), value);
        }
    }

    pub fn write(&self, dir: &Path) -> HarnessResult<PathBuf> {
        let path = dir.join(SIDECAR);
        let json = serde_json::to_string_pretty(self).expect("summary serializes");
        write_file(&path, &(json + "\n"))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// One-line human summary of a run.
pub fn describe(summary: &ResultSummary) -> String {
    let mut s = format!("{} / {}", summary.experiment, summary.optimizer);
    for (k, v) in &summary.metrics {
        let _ = write!(s, "  {k}={v:.6e}");
    }
    if summary.diverged {
        s.push_str("  DIVERGED");
    }
    s
}
