//! Adaptivity of a pre-conditioner: `A = d ln ψ(k·x) / dk` at `k = 1`,
//! measured by central differences and evaluated in closed form, plus the
//! Anon bound check, sample-based equivalence testing and a monitor for the
//! non-decreasing `ψ_t/η(t)` condition.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::anon::{anon_psi_explicit, idu_weights, segment_emas, IduConfig};
use crate::error::{OptimError, Result};
use crate::frame::ema;
use crate::precond::{psi_amsgrad_table, BoundSchedule, PreconditionerKind};

/// Default relative step of the central difference.
pub const DEFAULT_H: f64 = 1e-5;
/// Absolute tolerance for measured-vs-analytic comparisons.
pub const TOLERANCE: f64 = 1e-4;
/// Decrease of `ψ/η` tolerated as rounding noise by the monitor.
pub const MONOTONE_TOL: f64 = 1e-12;

/// A ψ that can be evaluated on any history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum PsiModel {
    Baseline(PreconditionerKind),
    /// AMSGrad as `max_i ψ_i^RMSProp` without re-debiasing.
    AmsGradTable {
        beta2: f64,
        epsilon: f64,
    },
    Anon(IduConfig),
}

impl PsiModel {
    pub fn name(&self) -> String {
        match self {
            Self::Baseline(k) => k.name().to_string(),
            Self::AmsGradTable { .. } => "amsgrad-table".into(),
            Self::Anon(c) => format!("anon(gamma={})", c.gamma),
        }
    }

    pub fn eval(&self, history: &[f64]) -> Result<f64> {
        match self {
            Self::Baseline(k) => k.evaluate(history),
            Self::AmsGradTable { beta2, epsilon } => psi_amsgrad_table(history, *beta2, *epsilon),
            Self::Anon(c) => anon_psi_explicit(history, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    /// One-sided differences disagree by more than `10·TOLERANCE`.
    pub kink_suspected: bool,
}

/// Central difference `[ln ψ((1+h)x) − ln ψ((1−h)x)] / 2h`.
pub fn measure_adaptivity<F>(psi: F, history: &[f64], h: f64) -> Result<Measurement>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h <= 0.01) {
        return Err(OptimError::Domain(format!(
            "step h = {h} outside (0, 0.01]"
        )));
    }
    let ln_at = |k: f64| -> Result<f64> {
        let scaled: Vec<f64> = history.iter().map(|x| k * x).collect();
        let v = psi(&scaled)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(OptimError::Domain(format!(
                "psi({k}·x) = {v} is not positive"
            )));
        }
        Ok(v.ln())
    };
    let (lo, mid, hi) = (ln_at(1.0 - h)?, ln_at(1.0)?, ln_at(1.0 + h)?);
    let value = (hi - lo) / (2.0 * h);
    let forward = (hi - mid) / h;
    let backward = (mid - lo) / h;
    Ok(Measurement {
        value,
        kink_suspected: (forward - backward).abs() > 10.0 * TOLERANCE,
    })
}

fn squares(history: &[f64]) -> Vec<f64> {
    history.iter().map(|x| x * x).collect()
}

/// `√E/(√E + ε)`, the adaptivity of `√(k²E) + ε`.
fn root_ratio(e: f64, epsilon: f64) -> f64 {
    let r = e.sqrt();
    if r == 0.0 {
        0.0
    } else {
        r / (r + epsilon)
    }
}

/// Closed-form adaptivity of `model` on `history`.
pub fn analytic_adaptivity(model: &PsiModel, history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(OptimError::Domain("adaptivity of an empty history".into()));
    }
    let t = history.len();
    match *model {
        PsiModel::Baseline(kind) => match kind {
            PreconditionerKind::Identity => Ok(0.0),
            PreconditionerKind::RmsProp { beta2, epsilon } => {
                Ok(root_ratio(ema(&squares(history), beta2)?, epsilon))
            }
            PreconditionerKind::AmsGrad { beta2, epsilon } => {
                // ψ = max_i (√E_i + ε)·√(1−β₂^i) / √(1−β₂^t); only the
                // maximizing index contributes.
                let sq = squares(history);
                let mut best = (f64::NEG_INFINITY, 0.0);
                for i in 1..=t {
                    let e = ema(&sq[..i], beta2)?;
                    let v = (e.sqrt() + epsilon) * (1.0 - beta2.powi(i as i32)).sqrt();
                    if v > best.0 {
                        best = (v, e);
                    }
                }
                Ok(root_ratio(best.1, epsilon))
            }
            PreconditionerKind::AdaBound {
                beta2,
                epsilon,
                final_scale,
            } => {
                let e = ema(&squares(history), beta2)?;
                let rms = e.sqrt() + epsilon;
                let bounds = BoundSchedule { final_scale, beta2 };
                let (lo, hi) = (bounds.lower(t as u64), bounds.upper(t as u64));
                Ok(if rms > lo && rms < hi {
                    root_ratio(e, epsilon)
                } else {
                    0.0
                })
            }
            PreconditionerKind::AdaBelief {
                beta1,
                beta2,
                epsilon,
            } => {
                let mut resid = Vec::with_capacity(t);
                for i in 1..=t {
                    let r = history[i - 1] - ema(&history[..i], beta1)?;
                    resid.push(r * r);
                }
                let r = ema(&resid, beta2)?;
                let s = r + epsilon / (1.0 - beta2);
                if r == 0.0 {
                    return Ok(0.0);
                }
                Ok(r / (s.sqrt() * (s.sqrt() + epsilon)))
            }
            PreconditionerKind::Padam { beta2, epsilon, p } => {
                let sq = squares(history);
                let mut max_raw = f64::NEG_INFINITY;
                for i in 1..=t {
                    max_raw = max_raw.max(ema(&sq[..i], beta2)? * (1.0 - beta2.powi(i as i32)));
                }
                let m = max_raw / (1.0 - beta2.powi(t as i32));
                Ok(if m == 0.0 {
                    0.0
                } else {
                    2.0 * p * m / (m + epsilon)
                })
            }
        },
        PsiModel::AmsGradTable { beta2, epsilon } => {
            let sq = squares(history);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 1..=t {
                let e = ema(&sq[..i], beta2)?;
                if e.sqrt() + epsilon > best.0 {
                    best = (e.sqrt() + epsilon, e);
                }
            }
            Ok(root_ratio(best.1, epsilon))
        }
        PsiModel::Anon(cfg) => anon_analytic(history, &cfg),
    }
}

/// `γ·(1 − ε·Σ w_j σ_j^{γ−1} / Σ w_j σ_j^γ)` with `σ_j = EMA_j + ε`.
fn anon_analytic(history: &[f64], cfg: &IduConfig) -> Result<f64> {
    if cfg.gamma == 0.0 {
        return Ok(0.0);
    }
    let emas = segment_emas(history, cfg)?;
    let w = idu_weights(emas.len(), cfg.beta3);
    let (mut num, mut den) = (0.0, 0.0);
    for (w, e) in w.iter().zip(&emas) {
        let sigma = e + cfg.epsilon;
        if sigma == 0.0 {
            return Err(OptimError::Domain(
                "zero segment with epsilon = 0: adaptivity undefined".into(),
            ));
        }
        num += w * sigma.powf(cfg.gamma - 1.0);
        den += w * sigma.powf(cfg.gamma);
    }
    Ok(cfg.gamma * (1.0 - cfg.epsilon * num / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    /// `ε / min_j EMA_j`.
    pub k: f64,
    /// Ordered interval spanned by `γ(1−k)` and `γ`.
    pub lower: f64,
    pub upper: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `measured ∈ [γ(1−k), γ]` widened by `tolerance`. For `γ < 0` the
/// two endpoints swap order, so the interval is taken between them.
pub fn bound_check(
    history: &[f64],
    cfg: &IduConfig,
    measured: f64,
    tolerance: f64,
) -> Result<BoundVerdict> {
    let emas = segment_emas(history, cfg)?;
    let min = emas.iter().copied().fold(f64::INFINITY, f64::min);
    let k = if cfg.epsilon == 0.0 {
        if min == 0.0 {
            return Err(OptimError::Domain(
                "all-zero segment with epsilon = 0: k undefined".into(),
            ));
        }
        0.0
    } else {
        cfg.epsilon / min
    };
    let a = cfg.gamma * (1.0 - k);
    let b = cfg.gamma;
    let (lower, upper) = if a <= b { (a, b) } else { (b, a) };
    let lower = if lower.is_nan() {
        f64::NEG_INFINITY
    } else {
        lower
    };
    Ok(BoundVerdict {
        k,
        lower,
        upper,
        measured,
        tolerance,
        holds: measured >= lower - tolerance && measured <= upper + tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    /// `true` means "consistent with equivalence" on the samples given; it
    /// is never a proof.
    pub consistent: bool,
    pub label: String,
    pub max_adaptivity_gap: f64,
    /// Largest relative spread of `ψ_A/ψ_B` among histories of one length.
    pub max_ratio_spread: f64,
}

/// Sample-based equivalence test: adaptivities agree within `TOLERANCE` on
/// every sample and `ψ_A/ψ_B` is constant per history length within 1e-8.
pub fn equivalence_check<A, B>(
    psi_a: A,
    psi_b: B,
    samples: &[Vec<f64>],
) -> Result<EquivalenceVerdict>
where
    A: Fn(&[f64]) -> Result<f64>,
    B: Fn(&[f64]) -> Result<f64>,
{
    let mut max_gap: f64 = 0.0;
    let mut ratios: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for h in samples {
        let a = measure_adaptivity(&psi_a, h, DEFAULT_H)?.value;
        let b = measure_adaptivity(&psi_b, h, DEFAULT_H)?.value;
        max_gap = max_gap.max((a - b).abs());
        ratios
            .entry(h.len())
            .or_default()
            .push(psi_a(h)? / psi_b(h)?);
    }
    let max_spread = ratios
        .values()
        .map(|rs| {
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo) / hi.abs().max(lo.abs())
        })
        .fold(0.0, f64::max);
    let consistent = max_gap <= TOLERANCE && max_spread <= 1e-8;
    Ok(EquivalenceVerdict {
        consistent,
        label: if consistent {
            "consistent with equivalence".into()
        } else {
            "not equivalent".into()
        },
        max_adaptivity_gap: max_gap,
        max_ratio_spread: max_spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityEntry {
    pub t: u64,
    pub coordinate: usize,
    pub ratio: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonotonicityLog {
    pub entries: Vec<MonotonicityEntry>,
    pub violations: usize,
}

impl MonotonicityLog {
    pub fn violation_steps(&self) -> Vec<u64> {
        let mut steps: Vec<u64> = self
            .entries
            .iter()
            .filter(|e| e.violation)
            .map(|e| e.t)
            .collect();
        steps.dedup();
        steps
    }
}

/// Flags every step where `ψ_t/η(t)` drops by more than [`MONOTONE_TOL`].
/// `psi[t−1]` and `lr[t−1]` belong to step `t`.
pub fn nondecreasing_monitor(psi: &[Vec<f64>], lr: &[f64]) -> Result<MonotonicityLog> {
    if psi.len() != lr.len() {
        return Err(OptimError::DimensionMismatch {
            expected: psi.len(),
            got: lr.len(),
        });
    }
    let mut log = MonotonicityLog::default();
    let mut prev: Option<Vec<f64>> = None;
    for (i, (row, &eta)) in psi.iter().zip(lr).enumerate() {
        let ratios: Vec<f64> = row.iter().map(|p| p / eta).collect();
        for (c, &r) in ratios.iter().enumerate() {
            let violation = prev.as_ref().is_some_and(|p| p[c] - r > MONOTONE_TOL);
            log.violations += usize::from(violation);
            log.entries.push(MonotonicityEntry {
                t: i as u64 + 1,
                coordinate: c,
                ratio: r,
                violation,
            });
        }
        prev = Some(ratios);
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateAdaptivity {
    pub coordinate: usize,
    pub measured: f64,
    pub analytic: Option<f64>,
    pub gap: Option<f64>,
    pub kink_suspected: bool,
    pub bound: Option<BoundVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityReport {
    pub optimizer: String,
    pub h: f64,
    pub history_len: usize,
    pub coordinates: Vec<CoordinateAdaptivity>,
}

/// Measured and analytic adaptivity for each coordinate history; Anon
/// models also carry a bound verdict when `ε > 0` or all segments are
/// non-zero.
pub fn adaptivity_report(
    model: &PsiModel,
    histories: &[Vec<f64>],
    h: f64,
) -> Result<AdaptivityReport> {
    let mut coordinates = Vec::with_capacity(histories.len());
    for (c, hist) in histories.iter().enumerate() {
        let m = measure_adaptivity(|x| model.eval(x), hist, h)?;
        let analytic = analytic_adaptivity(model, hist)?;
        let bound = match model {
            PsiModel::Anon(cfg) => bound_check(hist, cfg, m.value, TOLERANCE).ok(),
            _ => None,
        };
        coordinates.push(CoordinateAdaptivity {
            coordinate: c,
            measured: m.value,
            analytic: Some(analytic),
            gap: Some((m.value - analytic).abs()),
            kink_suspected: m.kink_suspected,
            bound,
        });
    }
    Ok(AdaptivityReport {
        optimizer: model.name(),
        h,
        history_len: histories.first().map_or(0, Vec::len),
        coordinates,
    })
}

/// β₂ values cycled through by [`sample_trials`].
pub const TRIAL_BETA2: [f64; 2] = [0.9, 0.999];
/// ε values cycled through by [`sample_trials`].
pub const TRIAL_EPSILON: [f64; 3] = [1e-8, 1e-4, 1e-2];
/// γ values covered by [`suite_models`] by default.
pub const SUITE_GAMMAS: [f64; 7] = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

/// A random gradient history and the hyper-parameters it is scored under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub history: Vec<f64>,
    pub beta2: f64,
    pub epsilon: f64,
}

/// `count` seeded histories. Trial `i` uses β₂ and ε cycled from
/// [`TRIAL_BETA2`] and [`TRIAL_EPSILON`], a length uniform in
/// `1..=max_len`, and standard normal entries times `10^U(−2, 1)`.
pub fn sample_trials(seed: u64, count: usize, max_len: usize) -> Result<Vec<Trial>> {
    if max_len == 0 {
        return Err(OptimError::Config("max_len must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|index| {
            let len = rng.gen_range(1..=max_len);
            let scale = 10f64.powf(rng.gen_range(-2.0..1.0));
            let history = (0..len)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Trial {
                index,
                history,
                beta2: TRIAL_BETA2[index % TRIAL_BETA2.len()],
                epsilon: TRIAL_EPSILON[index % TRIAL_EPSILON.len()],
            }
        })
        .collect())
}

/// Every baseline ψ plus Anon at each γ in `gammas`, all at the trial's
/// β₂ and ε. AMSGrad uses the practical (re-debiased) form.
pub fn suite_models(trial: &Trial, gammas: &[f64]) -> Vec<PsiModel> {
    let (beta2, epsilon) = (trial.beta2, trial.epsilon);
    let mut models = vec![
        PsiModel::Baseline(PreconditionerKind::Identity),
        PsiModel::Baseline(PreconditionerKind::RmsProp { beta2, epsilon }),
        PsiModel::Baseline(PreconditionerKind::AmsGrad { beta2, epsilon }),
        PsiModel::Baseline(PreconditionerKind::AdaBound {
            beta2,
            epsilon,
            final_scale: 1.0,
        }),
        PsiModel::Baseline(PreconditionerKind::AdaBelief {
            beta1: 0.9,
            beta2,
            epsilon,
        }),
        PsiModel::Baseline(PreconditionerKind::Padam {
            beta2,
            epsilon,
            p: 0.25,
        }),
    ];
    models.extend(gammas.iter().map(|&gamma| {
        PsiModel::Anon(IduConfig {
            gamma,
            beta2,
            epsilon,
            ..IduConfig::default()
        })
    }));
    models
}
