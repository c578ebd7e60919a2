//! Executes a single resolved configuration and writes its run directory.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{
    ensure_dir, fmt_f64, grid_table, regret_table, trajectory_table, write_file, ResultSummary,
    Table,
};
use super::{exit, sweep, HarnessError, HarnessResult};
use crate::adaptivity::{
    adaptivity_report, nondecreasing_monitor, sample_trials, suite_models, DEFAULT_H, SUITE_GAMMAS,
};
use crate::error::{OptimError, Result};
use crate::frame::{BoxRegion, Frame, Rule, ScheduleSpec};
use crate::optim::{OptimizerKind, OptimizerSpec};
use crate::testbed::functions::{
    landscape_scale, lr_grid_search, preconditioned_scale, run_function_with, GridSpec,
};
use crate::testbed::online::{noise_term, reddi_gradient, run_online, OnlineConfig};
use crate::testbed::smoke::{smoke_train_on, Dataset, SmokeConfig};
use crate::testbed::TrajectoryRecord;

/// Loss threshold reported as `steps_to_1e-3` for test functions.
pub const FUNCTION_TARGET: f64 = 1e-3;
/// Length of the random gradient streams fed to the ψ/η monitor.
pub const MONITOR_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: ResultSummary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.diverged {
            exit::DIVERGED
        } else {
            exit::OK
        }
    }
}

/// Runs `cfg`, delegating ablations and configs with sweep axes to the
/// sweep driver.
pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<RunOutcome> {
    if cfg.experiment == ExperimentKind::Ablation || cfg.has_sweep() {
        let outcome = sweep::run_sweep(cfg, 0)?;
        return Ok(outcome.into_run_outcome());
    }
    run_single(cfg)
}

/// Runs one grid point into `cfg.out`. A non-finite gradient or iterate
/// marks the run diverged instead of failing it.
pub fn run_single(cfg: &ExperimentConfig) -> HarnessResult<RunOutcome> {
    if cfg.has_sweep() {
        return Err(HarnessError::Config(
            "experiment: sweep axes need the sweep driver".into(),
        ));
    }
    let dir = cfg.out.clone();
    ensure_dir(&dir)?;
    let mut summary = ResultSummary::new(cfg);
    write_file(&dir.join("config.toml"), &cfg.to_toml())?;
    summary.files.push("config.toml".into());
    let result = match cfg.experiment {
        ExperimentKind::Reddi => reddi(cfg, &dir, &mut summary),
        ExperimentKind::Function => function(cfg, &dir, &mut summary),
        ExperimentKind::Smoke => smoke(cfg, &dir, &mut summary),
        ExperimentKind::Adaptivity => adaptivity(cfg, &dir, &mut summary),
        ExperimentKind::Ablation => Err(HarnessError::Config(
            "experiment: ablation runs through the sweep driver".into(),
        )),
    };
    match result {
        Ok(()) => {}
        Err(HarnessError::Optim(OptimError::NonFinite { .. })) => summary.diverged = true,
        Err(e) => return Err(e),
    }
    summary.write(&dir)?;
    Ok(RunOutcome { dir, summary })
}

fn emit(dir: &Path, summary: &mut ResultSummary, name: &str, table: &Table) -> HarnessResult<()> {
    table.write(&dir.join(name))?;
    summary.files.push(name.to_string());
    Ok(())
}

/// Final loss of a run attempt, `+∞` when it diverged.
fn score(attempt: Result<(f64, bool)>) -> Result<f64> {
    match attempt {
        Ok((_, true)) | Err(OptimError::NonFinite { .. }) => Ok(f64::INFINITY),
        Ok((loss, false)) => Ok(loss),
        Err(e) => Err(e),
    }
}

fn select_lr<F>(cfg: &ExperimentConfig, summary: &mut ResultSummary, run: F) -> HarnessResult<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let lr = if cfg.lr_search {
        let search = lr_grid_search(run)?;
        for (lr, s) in &search.scores {
            summary.set(format!("lr_score.{}", fmt_f64(*lr)), *s);
        }
        search.best_lr
    } else {
        cfg.lr
    };
    summary.set("lr_selected", lr);
    Ok(lr)
}

fn reddi(cfg: &ExperimentConfig, dir: &Path, summary: &mut ResultSummary) -> HarnessResult<()> {
    let online = OnlineConfig {
        horizon: cfg.steps,
        schedule: cfg.schedule_spec(),
        theta0: cfg.theta0,
    };
    let run = run_online(&cfg.optimizer_spec(), &online, &cfg.checkpoints)?;
    let records: Vec<TrajectoryRecord> = (0..run.theta.len())
        .map(|i| {
            let t = i as u64 + 1;
            let played = if i == 0 { cfg.theta0 } else { run.theta[i - 1] };
            TrajectoryRecord::new(
                t,
                reddi_gradient(t) * played,
                &run.theta[i..=i],
                (reddi_gradient(t) + noise_term(t)).abs(),
                run.lr[i],
                &run.psi[i..=i],
            )
        })
        .collect();
    emit(dir, summary, "trajectory.csv", &trajectory_table(&records))?;
    emit(
        dir,
        summary,
        "regret.csv",
        &regret_table(&run.ledger.points),
    )?;
    for p in &run.ledger.points {
        summary.set(format!("avg_regret@{}", p.t), p.avg_regret);
    }
    if let Some(p) = run.ledger.points.last() {
        summary.set("avg_regret", p.avg_regret);
        summary.set("regret", p.regret);
    }
    summary.set("theta_final", *run.theta.last().expect("horizon >= 1"));
    if let Some(t) = run.first_crossing(-0.99) {
        summary.set("first_crossing", t as f64);
    }
    Ok(())
}

fn function(cfg: &ExperimentConfig, dir: &Path, summary: &mut ResultSummary) -> HarnessResult<()> {
    let spec = cfg.optimizer_spec();
    let attempt = |steps: u64, lr: f64| {
        run_function_with(
            cfg.function,
            spec.build(2)?,
            cfg.start,
            steps,
            cfg.schedule_with(lr),
            cfg.frame_options(),
        )
    };
    let lr = select_lr(cfg, summary, |lr| {
        score(attempt(cfg.steps, lr).map(|r| (r.final_loss(), r.diverged)))
    })?;
    let run = attempt(cfg.steps, lr)?;
    emit(
        dir,
        summary,
        "trajectory.csv",
        &trajectory_table(&run.records),
    )?;
    summary.diverged = run.diverged;
    summary.set("final_loss", run.final_loss());
    if let Some(t) = run.first_below(FUNCTION_TARGET) {
        summary.set("steps_to_1e-3", t as f64);
    }

    let probe = attempt(cfg.landscape_step, lr)?;
    let psi = [probe.final_psi[0], probe.final_psi[1]];
    if let (false, Ok(scale)) = (probe.diverged, preconditioned_scale(psi)) {
        let range = [-cfg.grid_extent, cfg.grid_extent];
        let grid = GridSpec {
            x_range: range,
            y_range: range,
            nx: cfg.grid_n,
            ny: cfg.grid_n,
        };
        let values = landscape_scale(cfg.function, scale, &grid)?;
        let axis = GridSpec::axis(range, cfg.grid_n);
        emit(
            dir,
            summary,
            "landscape.csv",
            &grid_table(&axis, &axis, &values),
        )?;
        summary.set("landscape.psi_x", probe.final_psi[0]);
        summary.set("landscape.psi_y", probe.final_psi[1]);
        summary.set("landscape.scale_x", scale[0]);
        summary.set("landscape.scale_y", scale[1]);
    }
    Ok(())
}

fn smoke(cfg: &ExperimentConfig, dir: &Path, summary: &mut ResultSummary) -> HarnessResult<()> {
    let smoke_cfg = SmokeConfig {
        epochs: cfg.steps,
        ..SmokeConfig::default()
    };
    let data = Dataset::generate(cfg.seed, &smoke_cfg)?;
    let spec = cfg.optimizer_spec();
    let attempt = |lr: f64| {
        smoke_train_on(
            &data,
            spec.build(data.dim)?,
            cfg.schedule_with(lr),
            cfg.steps,
            cfg.frame_options(),
        )
    };
    let lr = select_lr(cfg, summary, |lr| {
        score(attempt(lr).map(|r| (r.final_loss(), r.diverged)))
    })?;
    let run = attempt(lr)?;
    emit(
        dir,
        summary,
        "trajectory.csv",
        &trajectory_table(&run.records),
    )?;
    summary.diverged = run.diverged;
    summary.set("initial_loss", run.initial_loss);
    summary.set("final_loss", run.final_loss());
    summary.set("reduction", run.reduction());
    Ok(())
}

/// Per-model aggregate written to `adaptivity.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: String,
    pub trials: usize,
    /// Largest measured-vs-analytic gap over histories without a kink.
    pub max_gap: f64,
    pub kinks: usize,
    pub bound_checked: usize,
    pub bound_failures: usize,
}

fn adaptivity(
    cfg: &ExperimentConfig,
    dir: &Path,
    summary: &mut ResultSummary,
) -> HarnessResult<()> {
    let trials = sample_trials(cfg.seed, cfg.trials, cfg.steps as usize)?;
    let mut table = Table::new([
        "trial",
        "len",
        "beta2",
        "epsilon",
        "model",
        "measured",
        "analytic",
        "gap",
        "kink",
        "bound_lower",
        "bound_upper",
        "bound_holds",
    ]);
    let mut aggregates: Vec<ModelAggregate> = Vec::new();
    for trial in &trials {
        for (m, model) in suite_models(trial, &SUITE_GAMMAS).iter().enumerate() {
            let report = adaptivity_report(model, std::slice::from_ref(&trial.history), DEFAULT_H)?;
            let c = &report.coordinates[0];
            if aggregates.len() <= m {
                aggregates.push(ModelAggregate {
                    model: report.optimizer.clone(),
                    trials: 0,
                    max_gap: 0.0,
                    kinks: 0,
                    bound_checked: 0,
                    bound_failures: 0,
                });
            }
            let agg = &mut aggregates[m];
            agg.trials += 1;
            let gap = c.gap.unwrap_or(f64::NAN);
            if c.kink_suspected {
                agg.kinks += 1;
            } else {
                agg.max_gap = agg.max_gap.max(gap);
            }
            let (lower, upper, holds) = match c.bound {
                Some(v) => {
                    agg.bound_checked += 1;
                    agg.bound_failures += usize::from(!v.holds);
                    (fmt_f64(v.lower), fmt_f64(v.upper), v.holds.to_string())
                }
                None => (String::new(), String::new(), String::new()),
            };
            table.push(vec![
                trial.index.to_string(),
                trial.history.len().to_string(),
                fmt_f64(trial.beta2),
                fmt_f64(trial.epsilon),
                report.optimizer,
                fmt_f64(c.measured),
                c.analytic.map(fmt_f64).unwrap_or_default(),
                fmt_f64(gap),
                c.kink_suspected.to_string(),
                lower,
                upper,
                holds,
            ]);
        }
    }
    emit(dir, summary, "adaptivity.csv", &table)?;
    let json = serde_json::to_string_pretty(&aggregates).expect("aggregates serialize");
    write_file(&dir.join("adaptivity.json"), &(json + "\n"))?;
    summary.files.push("adaptivity.json".into());
    let max_gap = aggregates.iter().map(|a| a.max_gap).fold(0.0, f64::max);
    summary.set("max_gap", max_gap);
    summary.set(
        "kinks",
        aggregates.iter().map(|a| a.kinks).sum::<usize>() as f64,
    );
    summary.set(
        "bound_failures",
        aggregates.iter().map(|a| a.bound_failures).sum::<usize>() as f64,
    );

    let monitor = monitor_cases(cfg)?;
    let mut table = Table::new([
        "case",
        "optimizer",
        "steps",
        "violations",
        "first_violation",
    ]);
    for case in &monitor {
        table.push(vec![
            case.case.clone(),
            case.optimizer.clone(),
            case.steps.to_string(),
            case.violations.to_string(),
            case.first_violation
                .map(|t| t.to_string())
                .unwrap_or_default(),
        ]);
        summary.set(
            format!("monitor.{}.{}", case.case, case.optimizer),
            case.violations as f64,
        );
    }
    emit(dir, summary, "monitor.csv", &table)
}

/// Outcome of the ψ/η monitor on one gradient stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorCase {
    pub case: String,
    pub optimizer: String,
    pub steps: usize,
    pub violations: usize,
    pub first_violation: Option<u64>,
}

/// ψ_t and η(t) for every step of a one-dimensional run from θ = 0.
pub fn trace_psi<R: Rule>(
    rule: R,
    grads: &[f64],
    schedule: ScheduleSpec,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut frame = Frame::new(rule, schedule, BoxRegion::unbounded(1))?;
    let mut theta = [0.0];
    let mut psi = Vec::with_capacity(grads.len());
    let mut lr = Vec::with_capacity(grads.len());
    for &g in grads {
        let report = frame.step(&mut theta, &[g])?;
        psi.push(frame.rule().psi());
        lr.push(report.lr);
    }
    Ok((psi, lr))
}

fn monitor_cases(cfg: &ExperimentConfig) -> HarnessResult<Vec<MonitorCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let random: Vec<f64> = (0..MONITOR_STEPS)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let crafted: Vec<f64> = (1..=64).map(|t| if t <= 4 { 10.0 } else { 0.1 }).collect();
    let base = cfg.optimizer_spec();
    let spec = |kind: OptimizerKind| OptimizerSpec {
        kind,
        epsilon: if kind == base.kind {
            base.epsilon
        } else {
            kind.default_epsilon()
        },
        ..base
    };
    let mut cases = Vec::new();
    for (case, grads, schedule) in [
        ("random", &random, ScheduleSpec::inverse_sqrt(cfg.lr)),
        ("crafted", &crafted, ScheduleSpec::constant(cfg.lr)),
    ] {
        for kind in [
            OptimizerKind::Adam,
            OptimizerKind::Amsgrad,
            OptimizerKind::Anon,
        ] {
            let (psi, lr) = trace_psi(spec(kind).build(1)?, grads, schedule)?;
            let log = nondecreasing_monitor(&psi, &lr)?;
            cases.push(MonitorCase {
                case: case.to_string(),
                optimizer: kind.to_string(),
                steps: grads.len(),
                violations: log.violations,
                first_violation: log.violation_steps().first().copied(),
            });
        }
    }
    Ok(cases)
}
