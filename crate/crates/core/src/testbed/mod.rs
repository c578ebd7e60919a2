//! Desk-scale experiments.

pub mod functions;
pub mod online;
pub mod smoke;

use serde::{Deserialize, Serialize};

/// Divergence guard on `max_i |θ_i|`.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Learning rates tried by the grid searches: `10^k`, `k = −4..=1`.
pub const LR_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// One optimizer step as emitted to a trajectory file. `loss` and `theta`
/// are taken after the update, `grad_norm` is that of the gradient used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub loss: f64,
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub lr: f64,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl TrajectoryRecord {
    pub fn new(step: u64, loss: f64, theta: &[f64], grad_norm: f64, lr: f64, psi: &[f64]) -> Self {
        let psi_min = psi.iter().copied().fold(f64::INFINITY, f64::min);
        let psi_max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            step,
            loss,
            theta: theta.to_vec(),
            grad_norm,
            lr,
            psi_min,
            psi_max,
        }
    }
}

pub(crate) fn diverged(theta: &[f64], loss: f64) -> bool {
    !loss.is_finite()
        || theta
            .iter()
            .any(|x| x.is_nan() || x.abs() > DIVERGENCE_LIMIT)
}
