//! Baseline pre-conditioners ψ.
//!
//! Each kind has two faces: a pure evaluator over one coordinate's gradient
//! history (used by the adaptivity meter, which needs `ψ(k·x)` for scaled
//! histories) and a streaming [`SecondMomentState`] used by the optimizers.
//! The two are kept as independent code paths and cross-checked in tests.

use serde::{Deserialize, Serialize};

use crate::error::{OptimError, Result};
use crate::frame::{ema, MomentumMode, MomentumState};

/// AdaBound's bound schedule on ψ, tightening towards `final_scale`:
/// `f_l(t) = s·(1 − 1/((1−β₂)t + 1))`, `f_u(t) = s·(1 + 1/((1−β₂)t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSchedule {
    pub final_scale: f64,
    pub beta2: f64,
}

impl BoundSchedule {
    pub fn lower(&self, t: u64) -> f64 {
        self.final_scale * (1.0 - 1.0 / ((1.0 - self.beta2) * t as f64 + 1.0))
    }

    pub fn upper(&self, t: u64) -> f64 {
        self.final_scale * (1.0 + 1.0 / ((1.0 - self.beta2) * t as f64))
    }
}

/// The pre-conditioner families of the baseline optimizers. Adam shares
/// RMSProp's ψ; SGD and SGDM use the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PreconditionerKind {
    Identity,
    RmsProp {
        beta2: f64,
        epsilon: f64,
    },
    AmsGrad {
        beta2: f64,
        epsilon: f64,
    },
    AdaBound {
        beta2: f64,
        epsilon: f64,
        final_scale: f64,
    },
    AdaBelief {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Padam {
        beta2: f64,
        epsilon: f64,
        p: f64,
    },
}

impl PreconditionerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::RmsProp { .. } => "rmsprop",
            Self::AmsGrad { .. } => "amsgrad",
            Self::AdaBound { .. } => "adabound",
            Self::AdaBelief { .. } => "adabelief",
            Self::Padam { .. } => "padam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_beta = |name: &str, b: f64| {
            if (0.0..1.0).contains(&b) {
                Ok(())
            } else {
                Err(OptimError::Config(format!("{name} = {b} outside [0, 1)")))
            }
        };
        let check_eps = |e: f64| {
            if e >= 0.0 && e.is_finite() {
                Ok(())
            } else {
                Err(OptimError::Config(format!("epsilon = {e} must be >= 0")))
            }
        };
        match *self {
            Self::Identity => Ok(()),
            Self::RmsProp { beta2, epsilon } | Self::AmsGrad { beta2, epsilon } => {
                check_beta("beta2", beta2)?;
                check_eps(epsilon)
            }
            Self::AdaBound {
                beta2,
                epsilon,
                final_scale,
            } => {
                check_beta("beta2", beta2)?;
                check_eps(epsilon)?;
                if final_scale > 0.0 && final_scale.is_finite() {
                    Ok(())
                } else {
                    Err(OptimError::Config(format!(
                        "final_scale = {final_scale} must be positive"
                    )))
                }
            }
            Self::AdaBelief {
                beta1,
                beta2,
                epsilon,
            } => {
                check_beta("beta1", beta1)?;
                check_beta("beta2", beta2)?;
                check_eps(epsilon)
            }
            Self::Padam { beta2, epsilon, p } => {
                check_beta("beta2", beta2)?;
                check_eps(epsilon)?;
                if p > 0.0 && p <= 0.5 {
                    Ok(())
                } else {
                    Err(OptimError::Config(format!(
                        "padam p = {p} outside (0, 1/2]"
                    )))
                }
            }
        }
    }

    /// ψ_t evaluated from scratch on one coordinate's history `x_{1:t}`.
    pub fn evaluate(&self, history: &[f64]) -> Result<f64> {
        match *self {
            Self::Identity => {
                non_empty(history)?;
                Ok(1.0)
            }
            Self::RmsProp { beta2, epsilon } => psi_rmsprop(history, beta2, epsilon),
            Self::AmsGrad { beta2, epsilon } => psi_amsgrad_history(history, beta2, epsilon),
            Self::AdaBound {
                beta2,
                epsilon,
                final_scale,
            } => {
                let rms = psi_rmsprop(history, beta2, epsilon)?;
                psi_adabound(
                    rms,
                    history.len() as u64,
                    &BoundSchedule { final_scale, beta2 },
                )
            }
            Self::AdaBelief {
                beta1,
                beta2,
                epsilon,
            } => psi_adabelief_history(history, beta1, beta2, epsilon),
            Self::Padam { beta2, epsilon, p } => psi_padam_history(history, beta2, epsilon, p),
        }
    }
}

fn non_empty(history: &[f64]) -> Result<()> {
    if history.is_empty() {
        Err(OptimError::Domain(
            "pre-conditioner of an empty history".into(),
        ))
    } else {
        Ok(())
    }
}

fn squares(history: &[f64]) -> Vec<f64> {
    history.iter().map(|x| x * x).collect()
}

/// `√EMA(x²; β₂) + ε`.
pub fn psi_rmsprop(history: &[f64], beta2: f64, epsilon: f64) -> Result<f64> {
    Ok(ema(&squares(history), beta2)?.sqrt() + epsilon)
}

/// Practical AMSGrad: `max_{i≤t}{ψ_i^RMSProp·√(1−β₂^i)} / √(1−β₂^t)`.
pub fn psi_amsgrad_history(history: &[f64], beta2: f64, epsilon: f64) -> Result<f64> {
    non_empty(history)?;
    let sq = squares(history);
    let t = history.len();
    let mut best = f64::NEG_INFINITY;
    for i in 1..=t {
        let rms = ema(&sq[..i], beta2)?.sqrt() + epsilon;
        best = best.max(rms * (1.0 - beta2.powi(i as i32)).sqrt());
    }
    Ok(best / (1.0 - beta2.powi(t as i32)).sqrt())
}

/// AMSGrad as tabulated: `max_{i≤t} ψ_i^RMSProp` (no re-debiasing).
pub fn psi_amsgrad_table(history: &[f64], beta2: f64, epsilon: f64) -> Result<f64> {
    non_empty(history)?;
    let sq = squares(history);
    (1..=history.len())
        .map(|i| ema(&sq[..i], beta2).map(|e| e.sqrt() + epsilon))
        .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
}

/// `Clip(ψ_rms, f_l(t), f_u(t))`.
pub fn psi_adabound(psi_rms: f64, t: u64, bounds: &BoundSchedule) -> Result<f64> {
    let (lo, hi) = (bounds.lower(t), bounds.upper(t));
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(OptimError::Config(format!(
            "adabound bounds inverted at t = {t}: {lo} > {hi}"
        )));
    }
    Ok(psi_rms.clamp(lo, hi))
}

/// `√EMA((x − φ^Adam)² + ε/(1−β₂); β₂) + ε`, with φ^Adam the debiased
/// EMA(β₁) of the gradients up to and including each step.
pub fn psi_adabelief_history(history: &[f64], beta1: f64, beta2: f64, epsilon: f64) -> Result<f64> {
    non_empty(history)?;
    let shift = epsilon / (1.0 - beta2);
    let mut terms = Vec::with_capacity(history.len());
    for i in 1..=history.len() {
        let phi = ema(&history[..i], beta1)?;
        let r = history[i - 1] - phi;
        terms.push(r * r + shift);
    }
    Ok(ema(&terms, beta2)?.sqrt() + epsilon)
}

/// `(max_{i≤t} v_i / (1−β₂^t) + ε)^p` with `v_i` the raw second moment.
pub fn psi_padam_history(history: &[f64], beta2: f64, epsilon: f64, p: f64) -> Result<f64> {
    non_empty(history)?;
    let sq = squares(history);
    let t = history.len();
    let mut max_raw = f64::NEG_INFINITY;
    for i in 1..=t {
        let raw = ema(&sq[..i], beta2)? * (1.0 - beta2.powi(i as i32));
        max_raw = max_raw.max(raw);
    }
    Ok((max_raw / (1.0 - beta2.powi(t as i32)) + epsilon).powf(p))
}

/// Streaming second-moment statistics for one [`PreconditionerKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentState {
    pub kind: PreconditionerKind,
    /// Raw (un-debiased) EMA accumulator.
    pub s: Vec<f64>,
    pub t: u64,
    /// AMSGrad: running max of `√s_i + ε√(1−β₂^i)`. Padam: running max of `s_i`.
    pub max_raw: Vec<f64>,
    /// AdaBelief's paired Adam momentum.
    pub belief: Option<MomentumState>,
    psi: Vec<f64>,
}

impl SecondMomentState {
    pub fn new(kind: PreconditionerKind, dim: usize) -> Result<Self> {
        kind.validate()?;
        let belief = match kind {
            PreconditionerKind::AdaBelief { beta1, .. } => {
                Some(MomentumState::new(dim, beta1, MomentumMode::DebiasedEma)?)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            s: vec![0.0; dim],
            t: 0,
            max_raw: vec![f64::NEG_INFINITY; dim],
            belief,
            psi: vec![1.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Current ψ_t per coordinate.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn update(&mut self, grad: &[f64]) {
        self.t += 1;
        let t = self.t as i32;
        match self.kind {
            PreconditionerKind::Identity => {}
            PreconditionerKind::RmsProp { beta2, epsilon } => {
                let c = 1.0 - beta2.powi(t);
                for i in 0..grad.len() {
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * grad[i] * grad[i];
                    self.psi[i] = (self.s[i] / c).sqrt() + epsilon;
                }
            }
            PreconditionerKind::AmsGrad { beta2, epsilon } => {
                let c = 1.0 - beta2.powi(t);
                let eps_term = epsilon * c.sqrt();
                for i in 0..grad.len() {
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * grad[i] * grad[i];
                    self.max_raw[i] = self.max_raw[i].max(self.s[i].sqrt() + eps_term);
                    self.psi[i] = self.max_raw[i] / c.sqrt();
                }
            }
            PreconditionerKind::AdaBound {
                beta2,
                epsilon,
                final_scale,
            } => {
                let c = 1.0 - beta2.powi(t);
                let bounds = BoundSchedule { final_scale, beta2 };
                let (lo, hi) = (bounds.lower(self.t), bounds.upper(self.t));
                for i in 0..grad.len() {
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * grad[i] * grad[i];
                    self.psi[i] = ((self.s[i] / c).sqrt() + epsilon).clamp(lo, hi);
                }
            }
            PreconditionerKind::AdaBelief { beta2, epsilon, .. } => {
                let belief = self.belief.as_mut().expect("adabelief carries a momentum");
                belief.update(grad);
                let mut phi = vec![0.0; grad.len()];
                belief.read(&mut phi);
                let shift = epsilon / (1.0 - beta2);
                let c = 1.0 - beta2.powi(t);
                for i in 0..grad.len() {
                    let r = grad[i] - phi[i];
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * (r * r + shift);
                    self.psi[i] = (self.s[i] / c).sqrt() + epsilon;
                }
            }
            PreconditionerKind::Padam { beta2, epsilon, p } => {
                let c = 1.0 - beta2.powi(t);
                for i in 0..grad.len() {
                    self.s[i] = beta2 * self.s[i] + (1.0 - beta2) * grad[i] * grad[i];
                    self.max_raw[i] = self.max_raw[i].max(self.s[i]);
                    self.psi[i] = (self.max_raw[i] / c + epsilon).powf(p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(kind: PreconditionerKind, xs: &[f64]) -> Vec<f64> {
        let mut st = SecondMomentState::new(kind, 1).unwrap();
        xs.iter()
            .map(|&x| {
                st.update(&[x]);
                st.psi()[0]
            })
            .collect()
    }

    #[test]
    fn rmsprop_examples() {
        assert_eq!(psi_rmsprop(&[0.0, 0.0, 0.0], 0.9, 0.01).unwrap(), 0.01);
        assert_eq!(psi_rmsprop(&[3.0], 0.999, 0.0).unwrap(), 3.0);
        // ema([1, 4]; 0.5) = (0.5/0.75)·(0.5·1 + 4) = 3
        let v = psi_rmsprop(&[1.0, 2.0], 0.5, 0.0).unwrap();
        assert!((v - 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn amsgrad_examples() {
        let c = 1.7;
        let v = psi_amsgrad_history(&[c; 20], 0.9, 0.0).unwrap();
        assert!((v - c).abs() < 1e-13);
        let v = psi_amsgrad_history(&[2.0, 0.0], 0.5, 0.0).unwrap();
        assert!((v - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let kind = PreconditionerKind::AmsGrad {
            beta2: 0.5,
            epsilon: 0.0,
        };
        let s = stream(kind, &[2.0, 0.0]);
        assert!((s[1] - 1.632_993_161_855_452).abs() < 1e-15);
        let single = psi_amsgrad_history(&[-0.7], 0.99, 1e-3).unwrap();
        assert!((single - psi_rmsprop(&[-0.7], 0.99, 1e-3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn amsgrad_table_form_is_max_of_rmsprop() {
        let xs = [3.0, 0.1, 0.2, 5.0, 0.0];
        let want = (1..=xs.len())
            .map(|i| psi_rmsprop(&xs[..i], 0.9, 0.1).unwrap())
            .fold(f64::MIN, f64::max);
        assert_eq!(psi_amsgrad_table(&xs, 0.9, 0.1).unwrap(), want);
    }

    #[test]
    fn adabound_examples() {
        let b = BoundSchedule {
            final_scale: 1.0,
            beta2: 0.999,
        };
        let t = 10;
        assert!(b.lower(t) < 0.5 && b.upper(t) > 2.0);
        assert_eq!(psi_adabound(1.2, t, &b).unwrap(), 1.2);
        assert_eq!(psi_adabound(1e6, t, &b).unwrap(), b.upper(t));
        // bounds converge to the final scale
        let late = 100_000_000;
        assert!((b.lower(late) - 1.0).abs() < 1e-4 && (b.upper(late) - 1.0).abs() < 1e-4);
        for rms in [1e-6, 0.3, 7.0, 1e9] {
            assert!((psi_adabound(rms, late, &b).unwrap() - 1.0).abs() < 1e-4);
        }
        let broken = BoundSchedule {
            final_scale: -1.0,
            beta2: 0.9,
        };
        assert!(psi_adabound(1.0, 3, &broken).is_err());
    }

    #[test]
    fn adabelief_examples() {
        let (b2, eps) = (0.999, 1e-4);
        let v = psi_adabelief_history(&[0.8; 10], 0.0, b2, eps).unwrap();
        let want = (eps / (1.0 - b2)).sqrt() + eps;
        assert!((v - want).abs() < 1e-12);

        let alt: Vec<f64> = (0..50)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(psi_adabelief_history(&alt, 0.0, 0.9, 0.0).unwrap() <= 2.0);

        assert_eq!(psi_adabelief_history(&[1.0], 0.9, 0.99, 0.0).unwrap(), 0.0);
        let v = psi_adabelief_history(&[1.0], 0.9, 0.99, 1e-3).unwrap();
        assert!((v - ((1e-3f64 / 0.01).sqrt() + 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn padam_examples() {
        let xs = [0.3, -2.0, 1.1, 0.05, 4.0, 0.0];
        let a = psi_amsgrad_history(&xs, 0.9, 0.0).unwrap();
        let p = psi_padam_history(&xs, 0.9, 0.0, 0.5).unwrap();
        assert!((a - p).abs() < 1e-12);

        let c = 2.5f64;
        let v = psi_padam_history(&[c; 12], 0.99, 0.0, 0.25).unwrap();
        assert!((v - c.sqrt()).abs() < 1e-12);

        let v = psi_padam_history(&xs, 0.9, 0.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_kinds_are_rejected() {
        let bad = [
            PreconditionerKind::Padam {
                beta2: 0.9,
                epsilon: 0.0,
                p: 0.75,
            },
            PreconditionerKind::RmsProp {
                beta2: 1.0,
                epsilon: 0.0,
            },
            PreconditionerKind::AmsGrad {
                beta2: 0.9,
                epsilon: -1.0,
            },
        ];
        for kind in bad {
            assert!(kind.validate().is_err(), "{kind:?}");
            assert!(SecondMomentState::new(kind, 1).is_err());
        }
        assert!(PreconditionerKind::Identity.evaluate(&[]).is_err());
    }

    fn kinds() -> Vec<PreconditionerKind> {
        vec![
            PreconditionerKind::Identity,
            PreconditionerKind::RmsProp {
                beta2: 0.9,
                epsilon: 1e-3,
            },
            PreconditionerKind::AmsGrad {
                beta2: 0.99,
                epsilon: 1e-3,
            },
            PreconditionerKind::AdaBound {
                beta2: 0.99,
                epsilon: 1e-3,
                final_scale: 1.0,
            },
            PreconditionerKind::AdaBelief {
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-3,
            },
            PreconditionerKind::Padam {
                beta2: 0.9,
                epsilon: 1e-3,
                p: 0.25,
            },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn streaming_matches_history(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..1024),
        ) {
            for kind in kinds() {
                let streamed = stream(kind, &xs);
                // spot-check a handful of prefixes, including the full one
                let n = xs.len();
                for t in [1, n / 3, n / 2, n].into_iter().filter(|&t| t >= 1) {
                    let batch = kind.evaluate(&xs[..t]).unwrap();
                    let got = streamed[t - 1];
                    prop_assert!(
                        (got - batch).abs() <= 1e-12 * batch.abs().max(1.0),
                        "{} t={} stream={} batch={}", kind.name(), t, got, batch
                    );
                }
            }
        }

        #[test]
        fn amsgrad_max_is_monotone_and_eq4_holds(
            xs in proptest::collection::vec(-10.0f64..10.0, 2..400),
            eps in 0.0f64..1.0,
        ) {
            let kind = PreconditionerKind::AmsGrad { beta2: 0.9, epsilon: eps };
            let mut st = SecondMomentState::new(kind, 1).unwrap();
            let mut prev_max = f64::NEG_INFINITY;
            let mut prev_ratio = f64::NEG_INFINITY;
            for (i, &x) in xs.iter().enumerate() {
                st.update(&[x]);
                prop_assert!(st.max_raw[0] >= prev_max);
                prev_max = st.max_raw[0];
                // ψ_t / η(t) with η(t) = 1/√t
                let ratio = st.psi()[0] * ((i + 1) as f64).sqrt();
                prop_assert!(ratio >= prev_ratio - 1e-12 * ratio.abs().max(1.0));
                prev_ratio = ratio;
            }
        }

        #[test]
        fn positivity_with_epsilon(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..64),
        ) {
            for kind in kinds() {
                prop_assert!(stream(kind, &xs).iter().all(|&p| p > 0.0), "{}", kind.name());
            }
        }

        #[test]
        fn homogeneity(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..64),
            k in -20.0f64..20.0,
        ) {
            prop_assume!(k.abs() > 1e-3);
            let scaled: Vec<f64> = xs.iter().map(|x| k * x).collect();
            let a = psi_rmsprop(&scaled, 0.9, 0.0).unwrap();
            let b = k.abs() * psi_rmsprop(&xs, 0.9, 0.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
            let p = 0.25;
            let a = psi_padam_history(&scaled, 0.9, 0.0, p).unwrap();
            let b = k.abs().powf(2.0 * p) * psi_padam_history(&xs, 0.9, 0.0, p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }
    }
}
