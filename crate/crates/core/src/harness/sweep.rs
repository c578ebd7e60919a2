//! Cartesian sweeps over optimizer × γ × η × β₃ × r, run in parallel.

use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiment::{run_single, RunOutcome};
use super::output::{ensure_dir, fmt_f64, write_file, ResultSummary, Table};
use super::{HarnessError, HarnessResult};

/// Subdirectory of the sweep output holding one directory per point.
pub const RUNS_DIR: &str = "runs";
/// Sidecar of the sweep as a whole, kept apart from per-run `run.json`.
pub const SWEEP_SIDECAR: &str = "sweep.json";

/// The metric that sweep manifests and tables report for each experiment.
pub fn headline_metric(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Reddi => "avg_regret",
        ExperimentKind::Function | ExperimentKind::Smoke | ExperimentKind::Ablation => "final_loss",
        ExperimentKind::Adaptivity => "max_gap",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub config: ExperimentConfig,
    pub summary: ResultSummary,
}

impl SweepPoint {
    pub fn headline(&self) -> f64 {
        if self.summary.diverged {
            return f64::INFINITY;
        }
        let key = headline_metric(self.config.experiment);
        self.summary.metrics.get(key).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub points: Vec<SweepPoint>,
    pub summary: ResultSummary,
}

impl SweepOutcome {
    pub fn into_run_outcome(self) -> RunOutcome {
        RunOutcome {
            dir: self.dir,
            summary: self.summary,
        }
    }
}

/// `None` stands for "axis not swept, keep the base value".
fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Expands the sweep axes into `(label, config)` pairs, in row-major order
/// optimizer, γ, η, β₃, r. Each config points at its own run directory.
/// An ablation sweeps the smoke experiment.
pub fn expand(cfg: &ExperimentConfig) -> HarnessResult<Vec<(String, ExperimentConfig)>> {
    let mut base = cfg.clone();
    base.sweep_optimizer.clear();
    base.sweep_gamma.clear();
    base.sweep_lr.clear();
    base.sweep_beta3.clear();
    base.sweep_ratio.clear();
    if base.experiment == ExperimentKind::Ablation {
        base.experiment = ExperimentKind::Smoke;
    }
    let default_eps = cfg.epsilon == cfg.optimizer.default_epsilon();
    let mut points = Vec::new();
    for opt in axis(&cfg.sweep_optimizer) {
        for gamma in axis(&cfg.sweep_gamma) {
            for lr in axis(&cfg.sweep_lr) {
                for beta3 in axis(&cfg.sweep_beta3) {
                    for ratio in axis(&cfg.sweep_ratio) {
                        let mut point = base.clone();
                        let mut parts = Vec::new();
                        if let Some(o) = opt {
                            point.optimizer = o;
                            if default_eps {
                                point.epsilon = o.default_epsilon();
                            }
                            parts.push(o.to_string());
                        }
                        if let Some(g) = gamma {
                            point.gamma = g;
                            parts.push(format!("g{g}"));
                        }
                        if let Some(l) = lr {
                            point.lr = l;
                            parts.push(format!("lr{l}"));
                        }
                        if let Some(b) = beta3 {
                            point.beta3 = b;
                            parts.push(format!("b3_{b}"));
                        }
                        if let Some(r) = ratio {
                            point.ratio = r;
                            parts.push(format!("r{r}"));
                        }
                        let label = format!("{:03}-{}", points.len(), parts.join("-"));
                        point.out = cfg.out.join(RUNS_DIR).join(&label);
                        point.validate().map_err(|e| {
                            HarnessError::Config(format!("sweep point {label}: {e}"))
                        })?;
                        points.push((label, point));
                    }
                }
            }
        }
    }
    Ok(points)
}

/// Runs every grid point with `jobs` worker threads (0 = one per core) and
/// writes `manifest.csv`, plus `table.csv` when the grid is β₃ × r.
/// Diverged points are recorded, not fatal.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> HarnessResult<SweepOutcome> {
    if !cfg.has_sweep() {
        return Err(HarnessError::Config("sweep: no sweep_* axis is set".into()));
    }
    let grid = expand(cfg)?;
    ensure_dir(&cfg.out.join(RUNS_DIR))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("jobs: {e}")))?;
    let results: Vec<HarnessResult<RunOutcome>> =
        pool.install(|| grid.par_iter().map(|(_, c)| run_single(c)).collect());
    let mut points = Vec::with_capacity(grid.len());
    for ((label, config), result) in grid.into_iter().zip(results) {
        points.push(SweepPoint {
            label,
            config,
            summary: result?.summary,
        });
    }

    let mut summary = ResultSummary::new(cfg);
    manifest(&points).write(&cfg.out.join("manifest.csv"))?;
    summary.files.push("manifest.csv".into());
    if let Some(table) = beta3_ratio_table(cfg, &points) {
        table.write(&cfg.out.join("table.csv"))?;
        summary.files.push("table.csv".into());
    }
    summary.set("points", points.len() as f64);
    summary.set(
        "diverged_points",
        points.iter().filter(|p| p.summary.diverged).count() as f64,
    );
    let best = points
        .iter()
        .map(SweepPoint::headline)
        .fold(f64::INFINITY, f64::min);
    summary.set(format!("best_{}", headline_metric(cfg.experiment)), best);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.out.join(SWEEP_SIDECAR), &(json + "\n"))?;
    Ok(SweepOutcome {
        dir: cfg.out.clone(),
        points,
        summary,
    })
}

fn manifest(points: &[SweepPoint]) -> Table {
    let mut table = Table::new([
        "label",
        "optimizer",
        "gamma",
        "lr",
        "beta3",
        "ratio",
        "diverged",
        "metric",
        "value",
    ]);
    for p in points {
        let c = &p.config;
        table.push(vec![
            p.label.clone(),
            c.optimizer.to_string(),
            fmt_f64(c.gamma),
            fmt_f64(c.lr),
            fmt_f64(c.beta3),
            c.ratio.to_string(),
            p.summary.diverged.to_string(),
            headline_metric(c.experiment).to_string(),
            fmt_f64(p.headline()),
        ]);
    }
    table
}

/// Rows r, columns β₃, cells the headline metric. Only defined when β₃
/// and r are the sole axes with more than one value.
fn beta3_ratio_table(cfg: &ExperimentConfig, points: &[SweepPoint]) -> Option<Table> {
    if cfg.sweep_beta3.is_empty()
        || cfg.sweep_ratio.is_empty()
        || cfg.sweep_optimizer.len() > 1
        || cfg.sweep_gamma.len() > 1
        || cfg.sweep_lr.len() > 1
    {
        return None;
    }
    let mut header = vec!["ratio\\beta3".to_string()];
    header.extend(cfg.sweep_beta3.iter().map(|b| fmt_f64(*b)));
    let mut table = Table::new(header);
    for &r in &cfg.sweep_ratio {
        let mut row = vec![r.to_string()];
        for &b in &cfg.sweep_beta3 {
            let cell = points
                .iter()
                .find(|p| p.config.ratio == r && p.config.beta3 == b)
                .map_or(f64::NAN, SweepPoint::headline);
            row.push(fmt_f64(cell));
        }
        table.push(row);
    }
    Some(table)
}
