//! Full-batch logistic regression on a seeded synthetic dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{diverged, TrajectoryRecord};
use crate::error::{OptimError, Result};
use crate::frame::{BoxRegion, Frame, FrameOptions, Rule, ScheduleSpec};
use crate::optim::OptimizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmokeConfig {
    pub dim: usize,
    pub samples: usize,
    pub epochs: u64,
    pub flip_prob: f64,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            samples: 1024,
            epochs: 200,
            flip_prob: 0.05,
        }
    }
}

/// Row-major features with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    /// Standard-normal features, labels from the sign of `x·w` for a
    /// standard-normal `w`, each label flipped with probability `flip_prob`.
    pub fn generate(seed: u64, cfg: &SmokeConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.samples == 0 {
            return Err(OptimError::Config("smoke dataset must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&cfg.flip_prob) {
            return Err(OptimError::Config(format!(
                "flip_prob = {} outside [0, 1]",
                cfg.flip_prob
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(cfg.dim * cfg.samples);
        let mut labels = Vec::with_capacity(cfg.samples);
        for _ in 0..cfg.samples {
            let row: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
            let margin: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let mut label = margin > 0.0;
            if rng.gen_bool(cfg.flip_prob) {
                label = !label;
            }
            features.extend(row);
            labels.push(if label { 1.0 } else { 0.0 });
        }
        Ok(Self {
            dim: cfg.dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean binary cross-entropy and its gradient at `w`.
    pub fn loss_and_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let n = self.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for (row, &y) in self.features.chunks_exact(self.dim).zip(&self.labels) {
            let z: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            // ln(1 + e^z) − y·z, evaluated without overflow
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
            let p = 1.0 / (1.0 + (-z).exp());
            for (g, x) in grad.iter_mut().zip(row) {
                *g += (p - y) * x;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeRun {
    pub initial_loss: f64,
    /// One record per epoch.
    pub records: Vec<TrajectoryRecord>,
    pub diverged: bool,
}

impl SmokeRun {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn reduction(&self) -> f64 {
        if self.diverged {
            f64::NEG_INFINITY
        } else {
            self.initial_loss - self.final_loss()
        }
    }
}

/// Trains from `w = 0` for `cfg.epochs` full-batch steps.
pub fn smoke_train(
    seed: u64,
    spec: &OptimizerSpec,
    schedule: ScheduleSpec,
    cfg: &SmokeConfig,
) -> Result<SmokeRun> {
    let data = Dataset::generate(seed, cfg)?;
    smoke_train_on(
        &data,
        spec.build(cfg.dim)?,
        schedule,
        cfg.epochs,
        FrameOptions::default(),
    )
}

pub fn smoke_train_on<R: Rule>(
    data: &Dataset,
    rule: R,
    schedule: ScheduleSpec,
    epochs: u64,
    options: FrameOptions,
) -> Result<SmokeRun> {
    let mut frame =
        Frame::new(rule, schedule, BoxRegion::unbounded(data.dim))?.with_options(options);
    let mut w = vec![0.0; data.dim];
    let (initial_loss, mut grad) = data.loss_and_grad(&w);
    let mut records = Vec::with_capacity(epochs as usize);
    for _ in 0..epochs {
        let report = frame.step(&mut w, &grad)?;
        let (loss, next) = data.loss_and_grad(&w);
        records.push(TrajectoryRecord::new(
            report.t,
            loss,
            &w,
            report.grad_norm,
            report.lr,
            &frame.rule().psi(),
        ));
        if diverged(&w, loss) || next.iter().any(|g| !g.is_finite()) {
            return Ok(SmokeRun {
                initial_loss,
                records,
                diverged: true,
            });
        }
        grad = next;
    }
    Ok(SmokeRun {
        initial_loss,
        records,
        diverged: false,
    })
}
