//! Anon: tunable-adaptivity pre-conditioning with incremental delay update
//! (IDU).
//!
//! The pre-conditioner only changes at milestone steps `t = a_j = r^{j−1}`.
//! At each milestone the second-moment EMA of the segment that just closed,
//! `σ = EMA(g²) + ε`, is raised to the power `γ` and folded into an
//! accumulator `p ← β₃·p + (1−β₃)·σ^γ`. The applied scaling is
//! `ψ = √p`, so `θ ← θ − η(t)·m̂_t/ψ`, and the adaptivity of ψ is close to
//! `γ` for any real `γ`.
//!
//! Two streaming formulations are provided, [`Anon`] (accumulator plus a
//! cached inverse scale `v = p^{-1/2}`) and [`AnonAlt`] (accumulator applied
//! through a division by `√p`, with independent milestone bookkeeping), along
//! with the batch evaluator [`anon_psi_explicit`] used as an oracle.

use serde::{Deserialize, Serialize};

use crate::error::{OptimError, Result};
use crate::frame::{ema, MomentumMode, MomentumState, Rule};

/// Geometric milestones `a_j = r^{j−1}` (`a_0 = 0`, `a_1 = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct MilestoneSchedule {
    ratio: u64,
}

impl MilestoneSchedule {
    pub fn new(ratio: u64) -> Result<Self> {
        if ratio < 2 {
            return Err(OptimError::Config(format!(
                "milestone ratio must be >= 2, got {ratio}"
            )));
        }
        Ok(Self { ratio })
    }

    pub fn ratio(&self) -> u64 {
        self.ratio
    }

    /// `a_j`; `None` on overflow.
    pub fn a(&self, j: u32) -> Option<u64> {
        match j {
            0 => Some(0),
            _ => self.ratio.checked_pow(j - 1),
        }
    }

    /// The snapshot index `k` when `t = r^k`, by exact integer arithmetic.
    pub fn snapshot_index(&self, t: u64) -> Option<u32> {
        let mut power = 1u64;
        let mut k = 0u32;
        while power < t {
            power = power.checked_mul(self.ratio)?;
            k += 1;
        }
        (power == t).then_some(k)
    }

    /// Number of gradients folded at snapshot `k`: `a_{k+1} − a_k`.
    pub fn segment_len(&self, k: u32) -> u64 {
        let hi = self.a(k + 1).expect("milestone overflow");
        let lo = self.a(k).expect("milestone overflow");
        hi - lo
    }

    /// `ã_t`, the number of milestones `≤ t`.
    pub fn count(&self, t: u64) -> u32 {
        let mut n = 0;
        let mut power = 1u64;
        while power <= t {
            n += 1;
            match power.checked_mul(self.ratio) {
                Some(p) => power = p,
                None => break,
            }
        }
        n
    }
}

impl TryFrom<u64> for MilestoneSchedule {
    type Error = OptimError;

    fn try_from(ratio: u64) -> Result<Self> {
        Self::new(ratio)
    }
}

impl From<MilestoneSchedule> for u64 {
    fn from(s: MilestoneSchedule) -> u64 {
        s.ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    /// Snapshot index (0-based).
    pub k: u32,
    /// Step at which the snapshot is taken.
    pub t: u64,
    /// Number of gradients in the segment closed by this snapshot.
    pub len: u64,
}

/// All snapshots `t = 1, r, r², … ≤ horizon`.
pub fn milestone_indices(ratio: u64, horizon: u64) -> Result<Vec<Milestone>> {
    let schedule = MilestoneSchedule::new(ratio)?;
    if horizon < 1 {
        return Err(OptimError::Domain("horizon must be >= 1".into()));
    }
    Ok((0..schedule.count(horizon))
        .map(|k| Milestone {
            k,
            t: schedule.a(k + 1).unwrap(),
            len: schedule.segment_len(k),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IduConfig {
    pub gamma: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub epsilon: f64,
    pub milestones: MilestoneSchedule,
}

impl Default for IduConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            beta2: 0.999,
            beta3: 0.5,
            epsilon: 1e-16,
            milestones: MilestoneSchedule { ratio: 2 },
        }
    }
}

impl IduConfig {
    /// `ε = 0` is accepted for oracle and metric work; with `γ < 0` a
    /// segment of zero gradients then drives the scale of that coordinate
    /// to zero.
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(OptimError::Config(format!(
                "gamma = {} is not finite",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::Config(format!(
                "beta2 = {} outside [0, 1)",
                self.beta2
            )));
        }
        if !(self.beta3 > 0.0 && self.beta3 < 1.0) {
            return Err(OptimError::Config(format!(
                "beta3 = {} outside (0, 1)",
                self.beta3
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(OptimError::Config(format!(
                "epsilon = {} must be >= 0",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Weights `β₃^{n−j}(1 − β₃·1_{j>1})`, `j = 1..=n`. They sum to one.
pub fn idu_weights(n: usize, beta3: f64) -> Vec<f64> {
    (1..=n)
        .map(|j| {
            let head = if j > 1 { 1.0 - beta3 } else { 1.0 };
            beta3.powi((n - j) as i32) * head
        })
        .collect()
}

/// The IDU fold `(Σ_j w_j ψ_j²)^{1/2}` over per-segment pre-conditioner
/// values, oldest segment first.
pub fn idu_fold(segment_psis: &[f64], beta3: f64) -> Result<f64> {
    if segment_psis.is_empty() {
        return Err(OptimError::Domain("IDU fold over zero segments".into()));
    }
    if let Some(v) = segment_psis.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(OptimError::Domain(format!("segment value {v} is negative")));
    }
    let w = idu_weights(segment_psis.len(), beta3);
    Ok(w.iter()
        .zip(segment_psis)
        .map(|(w, psi)| w * psi * psi)
        .sum::<f64>()
        .sqrt())
}

/// Where ε enters a segment statistic. The two placements agree exactly in
/// real arithmetic because the debiased EMA weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonPlacement {
    /// `EMA(x²) + ε`, as the streaming optimizer computes it.
    AfterEma,
    /// `EMA(x² + ε)`.
    InsideEma,
}

/// Debiased `EMA(g²; β₂)` of every closed segment up to step `t = history.len()`.
pub fn segment_emas(history: &[f64], cfg: &IduConfig) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(OptimError::Domain("empty gradient history".into()));
    }
    let schedule = cfg.milestones;
    let n = schedule.count(history.len() as u64);
    (1..=n)
        .map(|j| {
            let lo = schedule.a(j - 1).unwrap() as usize;
            let hi = schedule.a(j).unwrap() as usize;
            let sq: Vec<f64> = history[lo..hi].iter().map(|x| x * x).collect();
            ema(&sq, cfg.beta2)
        })
        .collect()
}

/// Per-segment `σ_j` with ε placed as requested.
pub fn segment_sigmas(
    history: &[f64],
    cfg: &IduConfig,
    placement: EpsilonPlacement,
) -> Result<Vec<f64>> {
    match placement {
        EpsilonPlacement::AfterEma => Ok(segment_emas(history, cfg)?
            .into_iter()
            .map(|e| e + cfg.epsilon)
            .collect()),
        EpsilonPlacement::InsideEma => {
            if history.is_empty() {
                return Err(OptimError::Domain("empty gradient history".into()));
            }
            let schedule = cfg.milestones;
            let n = schedule.count(history.len() as u64);
            (1..=n)
                .map(|j| {
                    let lo = schedule.a(j - 1).unwrap() as usize;
                    let hi = schedule.a(j).unwrap() as usize;
                    let shifted: Vec<f64> = history[lo..hi]
                        .iter()
                        .map(|x| x * x + cfg.epsilon)
                        .collect();
                    ema(&shifted, cfg.beta2)
                })
                .collect()
        }
    }
}

/// Batch evaluation of Anon's ψ_t on one coordinate's full history.
pub fn anon_psi_explicit(history: &[f64], cfg: &IduConfig) -> Result<f64> {
    anon_psi_explicit_with(history, cfg, EpsilonPlacement::AfterEma)
}

pub fn anon_psi_explicit_with(
    history: &[f64],
    cfg: &IduConfig,
    placement: EpsilonPlacement,
) -> Result<f64> {
    let olds: Vec<f64> = segment_sigmas(history, cfg, placement)?
        .into_iter()
        .map(|s| s.powf(cfg.gamma / 2.0))
        .collect();
    idu_fold(&olds, cfg.beta3)
}

/// Denominator used to debias the first moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasCorrection {
    /// `1 − β₁^t`.
    #[default]
    Momentum,
    /// `1 − β₂^t`, as written in the reference pseudocode.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnonConfig {
    pub idu: IduConfig,
    pub beta1: f64,
    pub bias_correction: BiasCorrection,
}

impl Default for AnonConfig {
    fn default() -> Self {
        Self {
            idu: IduConfig::default(),
            beta1: 0.9,
            bias_correction: BiasCorrection::Momentum,
        }
    }
}

impl AnonConfig {
    pub fn validate(&self) -> Result<()> {
        self.idu.validate()?;
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(OptimError::Config(format!(
                "beta1 = {} outside [0, 1)",
                self.beta1
            )));
        }
        Ok(())
    }

    fn debias_beta(&self) -> f64 {
        match self.bias_correction {
            BiasCorrection::Momentum => self.beta1,
            BiasCorrection::PaperLiteral => self.idu.beta2,
        }
    }
}

/// Streaming IDU statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IduState {
    pub t: u64,
    /// Index of the latest snapshot, `-1` before the first.
    pub k: i64,
    /// Step of the latest snapshot (0 before the first).
    pub last_reset: u64,
    /// Raw second-moment EMA of the open segment.
    pub s: Vec<f64>,
    /// Snapshot accumulator, `p = ψ²`.
    pub p: Vec<f64>,
}

impl IduState {
    pub fn new(dim: usize) -> Self {
        Self {
            t: 0,
            k: -1,
            last_reset: 0,
            s: vec![0.0; dim],
            p: vec![1.0; dim],
        }
    }

    /// Absorbs `g_t`; returns whether a snapshot was taken at this step.
    pub fn absorb(&mut self, cfg: &IduConfig, t: u64, grad: &[f64]) -> Result<bool> {
        if t != self.t + 1 {
            return Err(OptimError::State(format!(
                "expected step {}, got {t}",
                self.t + 1
            )));
        }
        let b2 = cfg.beta2;
        for (s, g) in self.s.iter_mut().zip(grad) {
            *s = b2 * *s + (1.0 - b2) * g * g;
        }
        self.t = t;
        let Some(k) = cfg.milestones.snapshot_index(t) else {
            return Ok(false);
        };
        if i64::from(k) != self.k + 1 {
            return Err(OptimError::State(format!(
                "snapshot {k} at step {t} does not follow snapshot {}",
                self.k
            )));
        }
        let debias = 1.0 - b2.powi(cfg.milestones.segment_len(k) as i32);
        for (p, s) in self.p.iter_mut().zip(self.s.iter_mut()) {
            let sigma = *s / debias + cfg.epsilon;
            let fresh = sigma.powf(cfg.gamma);
            *p = if k == 0 {
                fresh
            } else {
                cfg.beta3 * *p + (1.0 - cfg.beta3) * fresh
            };
            *s = 0.0;
        }
        self.k = i64::from(k);
        self.last_reset = t;
        Ok(true)
    }
}

/// Flat checkpoint of an [`Anon`] optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnonCheckpoint {
    pub t: u64,
    pub k: i64,
    pub last_reset: u64,
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
}

/// The Anon optimizer rule.
#[derive(Debug, Clone)]
pub struct Anon {
    cfg: AnonConfig,
    momentum: MomentumState,
    idu: IduState,
    /// `v = p^{-1/2}`, refreshed at snapshots.
    scale: Vec<f64>,
    m_hat: Vec<f64>,
}

impl Anon {
    pub fn new(cfg: AnonConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            momentum: MomentumState::new(dim, cfg.beta1, MomentumMode::DebiasedEma)?,
            idu: IduState::new(dim),
            scale: vec![1.0; dim],
            m_hat: vec![0.0; dim],
        })
    }

    pub fn config(&self) -> &AnonConfig {
        &self.cfg
    }

    pub fn state(&self) -> &IduState {
        &self.idu
    }

    /// The applied inverse scaling `v` (diagonal of `S_t⁻¹`).
    pub fn inverse_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn checkpoint(&self) -> AnonCheckpoint {
        AnonCheckpoint {
            t: self.idu.t,
            k: self.idu.k,
            last_reset: self.idu.last_reset,
            m: self.momentum.m.clone(),
            s: self.idu.s.clone(),
            p: self.idu.p.clone(),
        }
    }

    pub fn restore(cfg: AnonConfig, ckpt: &AnonCheckpoint) -> Result<Self> {
        let dim = ckpt.m.len();
        for len in [ckpt.s.len(), ckpt.p.len()] {
            if len != dim {
                return Err(OptimError::DimensionMismatch {
                    expected: dim,
                    got: len,
                });
            }
        }
        let mut anon = Self::new(cfg, dim)?;
        anon.momentum.m = ckpt.m.clone();
        anon.momentum.t = ckpt.t;
        anon.idu = IduState {
            t: ckpt.t,
            k: ckpt.k,
            last_reset: ckpt.last_reset,
            s: ckpt.s.clone(),
            p: ckpt.p.clone(),
        };
        if ckpt.k >= 0 {
            anon.refresh_scale();
        }
        Ok(anon)
    }

    fn refresh_scale(&mut self) {
        for (v, p) in self.scale.iter_mut().zip(&self.idu.p) {
            *v = 1.0 / p.sqrt();
        }
    }
}

impl Rule for Anon {
    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn name(&self) -> String {
        format!("anon(gamma={})", self.cfg.idu.gamma)
    }

    fn advance(&mut self, t: u64, grad: &[f64], direction: &mut [f64]) -> Result<()> {
        if t != self.idu.t + 1 {
            return Err(OptimError::State(format!(
                "anon expected step {}, got {t}",
                self.idu.t + 1
            )));
        }
        self.momentum.update(grad);
        self.momentum
            .read_debiased_by(self.cfg.debias_beta(), &mut self.m_hat);
        if self.idu.absorb(&self.cfg.idu, t, grad)? {
            self.refresh_scale();
        }
        for ((d, v), m) in direction.iter_mut().zip(&self.scale).zip(&self.m_hat) {
            *d = v * m;
        }
        Ok(())
    }

    fn psi(&self) -> Vec<f64> {
        self.idu.p.iter().map(|p| p.sqrt()).collect()
    }
}

/// Anon in the accumulator-first formulation: the running average of `σ^γ`
/// is kept directly and applied as a division by its square root. Milestones
/// are tracked through the next expected power `r^k` and the previous
/// milestone `a`.
#[derive(Debug, Clone)]
pub struct AnonAlt {
    cfg: AnonConfig,
    t: u64,
    next_k: u32,
    a: u64,
    m: Vec<f64>,
    s: Vec<f64>,
    acc: Vec<f64>,
}

impl AnonAlt {
    pub fn new(cfg: AnonConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            t: 0,
            next_k: 0,
            a: 0,
            m: vec![0.0; dim],
            s: vec![0.0; dim],
            acc: vec![1.0; dim],
        })
    }

    /// The accumulator `v_k` (equal to `ψ²`).
    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }
}

impl Rule for AnonAlt {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn name(&self) -> String {
        format!("anon-alt(gamma={})", self.cfg.idu.gamma)
    }

    fn advance(&mut self, t: u64, grad: &[f64], direction: &mut [f64]) -> Result<()> {
        if t != self.t + 1 {
            return Err(OptimError::State(format!(
                "anon-alt expected step {}, got {t}",
                self.t + 1
            )));
        }
        self.t = t;
        let AnonConfig { idu, beta1, .. } = self.cfg;
        let b2 = idu.beta2;
        for i in 0..grad.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.s[i] = b2 * self.s[i] + (1.0 - b2) * grad[i] * grad[i];
        }
        let target = idu
            .milestones
            .ratio()
            .checked_pow(self.next_k)
            .ok_or_else(|| OptimError::State("milestone overflow".into()))?;
        if t == target {
            let debias = 1.0 - b2.powi((target - self.a) as i32);
            self.a = target;
            for i in 0..grad.len() {
                let sigma = self.s[i] / debias + idu.epsilon;
                let fresh = sigma.powf(idu.gamma);
                self.acc[i] = if self.next_k > 0 {
                    idu.beta3 * self.acc[i] + (1.0 - idu.beta3) * fresh
                } else {
                    fresh
                };
                self.s[i] = 0.0;
            }
            self.next_k += 1;
        } else if t > target {
            return Err(OptimError::State(format!("milestone {target} was skipped")));
        }
        let correction = 1.0 - self.cfg.debias_beta().powi(t as i32);
        for i in 0..grad.len() {
            direction[i] = (self.m[i] / correction) / self.acc[i].sqrt();
        }
        Ok(())
    }

    fn psi(&self) -> Vec<f64> {
        self.acc.iter().map(|a| a.sqrt()).collect()
    }
}
