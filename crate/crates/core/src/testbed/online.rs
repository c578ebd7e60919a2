//! The periodic adversarial online problem on `F = [−1, 1]` with vanishing
//! alternating gradient noise, and its regret accounting.

use serde::{Deserialize, Serialize};

use crate::error::{OptimError, Result};
use crate::frame::{BoxRegion, Frame, Rule, ScheduleSpec};
use crate::optim::OptimizerSpec;

/// Period of the loss sequence.
pub const PERIOD: u64 = 101;

/// Coefficient `c_t` of the linear loss `f_t(x) = c_t·x`.
pub fn reddi_gradient(t: u64) -> f64 {
    if t % PERIOD == 1 {
        1010.0
    } else {
        -10.0
    }
}

/// `N_t = ±500/e^{t−1}`, positive on odd steps.
pub fn noise_term(t: u64) -> f64 {
    let magnitude = 500.0 * (-((t - 1) as f64)).exp();
    if t % 2 == 1 {
        magnitude
    } else {
        -magnitude
    }
}

/// `C_T = Σ_{t≤T} c_t` in closed form.
pub fn cumulative_coefficient(horizon: u64) -> f64 {
    let spikes = horizon.div_ceil(PERIOD);
    1010.0 * spikes as f64 - 10.0 * (horizon - spikes) as f64
}

/// The best fixed point in hindsight and its cumulative loss `C_T·x*`.
pub fn best_fixed_point(horizon: u64) -> (f64, f64) {
    let c = cumulative_coefficient(horizon);
    let x = if c > 0.0 {
        -1.0
    } else if c < 0.0 {
        1.0
    } else {
        0.0
    };
    (x, c * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub horizon: u64,
    pub schedule: ScheduleSpec,
    pub theta0: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            schedule: ScheduleSpec::inverse_sqrt(0.1),
            theta0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: u64,
    pub cumulative_loss: f64,
    pub best_loss: f64,
    pub regret: f64,
    pub avg_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegretLedger {
    pub points: Vec<RegretPoint>,
}

impl RegretLedger {
    pub fn at(&self, t: u64) -> Option<&RegretPoint> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// Powers of ten up to and including `horizon`, plus `horizon` itself.
pub fn power_of_ten_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(10u64), |p| p.checked_mul(10))
        .take_while(|&p| p <= horizon)
        .collect();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub ledger: RegretLedger,
    /// `θ_t` after each step, `t = 1..=T`.
    pub theta: Vec<f64>,
    /// ψ_t after each step.
    pub psi: Vec<f64>,
    pub lr: Vec<f64>,
}

impl OnlineRun {
    /// First step after which `θ_t ≤ level`.
    pub fn first_crossing(&self, level: f64) -> Option<u64> {
        self.theta
            .iter()
            .position(|&x| x <= level)
            .map(|i| i as u64 + 1)
    }
}

/// Plays `T` rounds (by default `η(t) = 0.1/√t`). The loss of round `t` is charged
/// at the point played, `θ_{t−1}`; the gradient fed to the optimizer is
/// `c_t + N_t`.
pub fn run_online(
    spec: &OptimizerSpec,
    cfg: &OnlineConfig,
    checkpoints: &[u64],
) -> Result<OnlineRun> {
    run_online_with(spec.build(1)?, cfg, checkpoints)
}

pub fn run_online_with<R: Rule>(
    rule: R,
    cfg: &OnlineConfig,
    checkpoints: &[u64],
) -> Result<OnlineRun> {
    if cfg.horizon < 1 {
        return Err(OptimError::Config("horizon must be >= 1".into()));
    }
    if !(-1.0..=1.0).contains(&cfg.theta0) {
        return Err(OptimError::Config(format!(
            "theta0 = {} outside [-1, 1]",
            cfg.theta0
        )));
    }
    let mut frame = Frame::new(rule, cfg.schedule, BoxRegion::cube(1, -1.0, 1.0)?)?;
    let mut theta = [cfg.theta0];
    let mut cumulative = 0.0;
    let mut run = OnlineRun {
        ledger: RegretLedger::default(),
        theta: Vec::with_capacity(cfg.horizon as usize),
        psi: Vec::with_capacity(cfg.horizon as usize),
        lr: Vec::with_capacity(cfg.horizon as usize),
    };
    for t in 1..=cfg.horizon {
        let c = reddi_gradient(t);
        cumulative += c * theta[0];
        let report = frame.step(&mut theta, &[c + noise_term(t)])?;
        run.theta.push(theta[0]);
        run.psi.push(frame.rule().psi()[0]);
        run.lr.push(report.lr);
        if checkpoints.contains(&t) {
            let (_, best) = best_fixed_point(t);
            let regret = cumulative - best;
            run.ledger.points.push(RegretPoint {
                t,
                cumulative_loss: cumulative,
                best_loss: best,
                regret,
                avg_regret: regret / t as f64,
            });
        }
    }
    Ok(run)
}
