//! The generic first-order optimizer frame.
//!
//! Every optimizer in this crate is a [`Rule`] that folds the gradient
//! history into a momentum `m_t` and a diagonal pre-conditioner `S_t`,
//! driven by [`generic_step`]:
//!
//! ```text
//! θ_t = Π_{F,S_t}( θ_{t-1} − η(t) · S_t⁻¹ · m_t )
//! ```
//!
//! The feasible sets used here are axis-aligned boxes, for which the
//! `S_t`-weighted projection is a plain per-coordinate clamp.

use serde::{Deserialize, Serialize};

use crate::error::{OptimError, Result};

/// A dense real vector with finite entries and a fixed, non-zero dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(OptimError::Domain(
                "parameter vector must be non-empty".into(),
            ));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(OptimError::Domain(format!(
                "parameter vector entry {i} is not finite ({v})"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = OptimError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

/// Bias-corrected exponential moving average of a whole sequence:
/// `(1−β)/(1−β^t) · Σ β^{t−i} x_i`.
pub fn ema(xs: &[f64], beta: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(OptimError::Domain("EMA of an empty sequence".into()));
    }
    let t = xs.len() as i32;
    let raw = momentum_m(xs, beta)?;
    Ok((1.0 - beta) / (1.0 - beta.powi(t)) * raw)
}

/// Classical un-normalized momentum `Σ β^{t−i} x_i`.
pub fn momentum_m(xs: &[f64], beta: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(OptimError::Domain("momentum of an empty sequence".into()));
    }
    Ok(xs.iter().fold(0.0, |acc, &x| beta * acc + x))
}

/// How a [`MomentumState`] accumulates gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumMode {
    /// `m ← β·m + (1−β)·g`, read back divided by `1 − β^t`.
    DebiasedEma,
    /// `m ← β·m + g`, read back as is.
    RawM,
}

/// Streaming per-coordinate momentum accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub m: Vec<f64>,
    pub t: u64,
    pub beta: f64,
    pub mode: MomentumMode,
}

impl MomentumState {
    pub fn new(dim: usize, beta: f64, mode: MomentumMode) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(OptimError::Config(format!(
                "momentum beta {beta} outside [0, 1)"
            )));
        }
        Ok(Self {
            m: vec![0.0; dim],
            t: 0,
            beta,
            mode,
        })
    }

    pub fn update(&mut self, grad: &[f64]) {
        let beta = self.beta;
        match self.mode {
            MomentumMode::DebiasedEma => {
                for (m, &g) in self.m.iter_mut().zip(grad) {
                    *m = beta * *m + (1.0 - beta) * g;
                }
            }
            MomentumMode::RawM => {
                for (m, &g) in self.m.iter_mut().zip(grad) {
                    *m = beta * *m + g;
                }
            }
        }
        self.t += 1;
    }

    /// Reads `m_t`, debiased with the state's own β when in EMA mode.
    pub fn read(&self, out: &mut [f64]) {
        self.read_debiased_by(self.beta, out)
    }

    /// Reads `m_t / (1 − b^t)` for an arbitrary denominator base `b`
    /// (EMA mode), or the raw accumulator (raw mode).
    pub fn read_debiased_by(&self, denominator_beta: f64, out: &mut [f64]) {
        match self.mode {
            MomentumMode::DebiasedEma => {
                let correction = 1.0 - denominator_beta.powi(self.t as i32);
                for (o, &m) in out.iter_mut().zip(&self.m) {
                    *o = m / correction;
                }
            }
            MomentumMode::RawM => out.copy_from_slice(&self.m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    InverseSqrt,
}

/// Learning-rate schedule `η(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub eta0: f64,
}

impl ScheduleSpec {
    pub fn constant(eta0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            eta0,
        }
    }

    pub fn inverse_sqrt(eta0: f64) -> Self {
        Self {
            kind: ScheduleKind::InverseSqrt,
            eta0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(OptimError::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.eta0
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: u64) -> Result<f64> {
        if t < 1 {
            return Err(OptimError::Domain("schedule evaluated at t < 1".into()));
        }
        Ok(match self.kind {
            ScheduleKind::Constant => self.eta0,
            ScheduleKind::InverseSqrt => self.eta0 / (t as f64).sqrt(),
        })
    }
}

/// Axis-aligned feasible region; infinite bounds mean unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(OptimError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len())
            .find(|&i| lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i])
        {
            return Err(OptimError::Config(format!(
                "empty region in coordinate {i}: lower {} > upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    /// In-place clamp onto the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Strictly positive diagonal scaling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScaling {
    diag: Vec<f64>,
}

impl DiagScaling {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some((i, d)) = diag
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(OptimError::Config(format!(
                "scaling entry {i} must be positive and finite, got {d}"
            )));
        }
        Ok(Self { diag })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            diag: vec![1.0; dim],
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

/// `argmin_{x ∈ region} ‖S^{1/2}(x − y)‖`. The objective is separable, so
/// the minimizer is the coordinatewise clamp for any positive diagonal `S`.
pub fn project_box(y: &[f64], region: &BoxRegion, scaling: &DiagScaling) -> Result<Vec<f64>> {
    if region.dim() != y.len() {
        return Err(OptimError::DimensionMismatch {
            expected: y.len(),
            got: region.dim(),
        });
    }
    if scaling.diag().len() != y.len() {
        return Err(OptimError::DimensionMismatch {
            expected: y.len(),
            got: scaling.diag().len(),
        });
    }
    let region = BoxRegion::new(region.lower.clone(), region.upper.clone())?;
    let mut x = y.to_vec();
    region.clamp(&mut x);
    Ok(x)
}

/// One member of the frame: the pair (momentum operator, pre-conditioner).
pub trait Rule {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    /// Folds `g_t` into the state and writes `S_t⁻¹ m_t` into `direction`.
    /// `t` is 1-based and must be the next unseen step.
    fn advance(&mut self, t: u64, grad: &[f64], direction: &mut [f64]) -> Result<()>;

    /// The diagonal of `S_t` after the most recent `advance`.
    fn psi(&self) -> Vec<f64>;
}

impl<R: Rule + ?Sized> Rule for Box<R> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn advance(&mut self, t: u64, grad: &[f64], direction: &mut [f64]) -> Result<()> {
        (**self).advance(t, grad, direction)
    }

    fn psi(&self) -> Vec<f64> {
        (**self).psi()
    }
}

/// Optional extras layered on the frame. Both default off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    /// Decoupled weight decay coefficient, applied as `θ ← θ − η(t)·λ·θ`
    /// before the pre-conditioned step.
    pub weight_decay: Option<f64>,
    /// Clip `g_t` to this global L2 norm before it reaches φ and ψ.
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub t: u64,
    pub lr: f64,
    /// L2 norm of the gradient as received (before clipping).
    pub grad_norm: f64,
}

/// One iteration of the frame at step `t`.
pub fn generic_step<R: Rule + ?Sized>(
    rule: &mut R,
    theta: &mut [f64],
    grad: &[f64],
    t: u64,
    schedule: &ScheduleSpec,
    region: &BoxRegion,
    options: &FrameOptions,
) -> Result<StepReport> {
    let d = rule.dim();
    for len in [theta.len(), grad.len(), region.dim()] {
        if len != d {
            return Err(OptimError::DimensionMismatch {
                expected: d,
                got: len,
            });
        }
    }
    if let Some((i, &g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(OptimError::NonFinite {
            step: t,
            coordinate: i,
            value: g,
        });
    }
    let lr = schedule.eval(t)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

    let mut g = grad.to_vec();
    if let Some(max_norm) = options.clip_norm {
        if grad_norm > max_norm {
            let scale = max_norm / grad_norm;
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }

    let mut direction = vec![0.0; d];
    rule.advance(t, &g, &mut direction)?;

    if let Some(decay) = options.weight_decay {
        for th in theta.iter_mut() {
            *th -= lr * decay * *th;
        }
    }
    for (th, dir) in theta.iter_mut().zip(&direction) {
        *th -= lr * dir;
    }
    region.clamp(theta);
    Ok(StepReport { t, lr, grad_norm })
}

/// A rule bundled with its schedule, region and step counter.
#[derive(Debug, Clone)]
pub struct Frame<R> {
    rule: R,
    pub schedule: ScheduleSpec,
    pub region: BoxRegion,
    pub options: FrameOptions,
    t: u64,
}

impl<R: Rule> Frame<R> {
    pub fn new(rule: R, schedule: ScheduleSpec, region: BoxRegion) -> Result<Self> {
        schedule.validate()?;
        if region.dim() != rule.dim() {
            return Err(OptimError::DimensionMismatch {
                expected: rule.dim(),
                got: region.dim(),
            });
        }
        Ok(Self {
            rule,
            schedule,
            region,
            options: FrameOptions::default(),
            t: 0,
        })
    }

    pub fn with_options(mut self, options: FrameOptions) -> Self {
        self.options = options;
        self
    }

    /// Continues from step `t`, e.g. with a rule restored from a checkpoint
    /// taken after `t` steps.
    pub fn resumed_at(mut self, t: u64) -> Self {
        self.t = t;
        self
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<StepReport> {
        let report = generic_step(
            &mut self.rule,
            theta,
            grad,
            self.t + 1,
            &self.schedule,
            &self.region,
            &self.options,
        )?;
        self.t += 1;
        Ok(report)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn rule(&self) -> &R {
        &self.rule
    }

    pub fn rule_mut(&mut self) -> &mut R {
        &mut self.rule
    }

    pub fn into_rule(self) -> R {
        self.rule
    }
}
