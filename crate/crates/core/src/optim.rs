//! Baseline optimizers and the optimizer registry.
//!
//! Every baseline is a momentum operator paired with a [`SecondMomentState`];
//! the direction handed to the frame is `m_t / ψ_t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anon::{Anon, AnonAlt, AnonConfig, BiasCorrection, IduConfig, MilestoneSchedule};
use crate::error::{OptimError, Result};
use crate::frame::{MomentumMode, MomentumState, Rule};
use crate::precond::{PreconditionerKind, SecondMomentState};

/// A momentum operator (or none) with a baseline pre-conditioner.
#[derive(Debug, Clone)]
pub struct Baseline {
    name: &'static str,
    momentum: Option<MomentumState>,
    second: SecondMomentState,
    m_buf: Vec<f64>,
}

impl Baseline {
    pub fn new(
        name: &'static str,
        momentum: Option<(f64, MomentumMode)>,
        kind: PreconditionerKind,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(OptimError::Config("dimension must be positive".into()));
        }
        let momentum = momentum
            .map(|(beta, mode)| MomentumState::new(dim, beta, mode))
            .transpose()?;
        Ok(Self {
            name,
            momentum,
            second: SecondMomentState::new(kind, dim)?,
            m_buf: vec![0.0; dim],
        })
    }

    pub fn sgd(dim: usize) -> Result<Self> {
        Self::new("sgd", None, PreconditionerKind::Identity, dim)
    }

    /// Classical heavy-ball momentum `m ← β·m + g`.
    pub fn sgdm(dim: usize, beta1: f64) -> Result<Self> {
        Self::new(
            "sgdm",
            Some((beta1, MomentumMode::RawM)),
            PreconditionerKind::Identity,
            dim,
        )
    }

    /// SGD on the debiased EMA momentum; Anon with `γ = 0` reduces to this.
    pub fn sgd_ema(dim: usize, beta1: f64) -> Result<Self> {
        Self::new(
            "sgd-ema",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::Identity,
            dim,
        )
    }

    pub fn rmsprop(dim: usize, beta2: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            "rmsprop",
            None,
            PreconditionerKind::RmsProp { beta2, epsilon },
            dim,
        )
    }

    pub fn adam(dim: usize, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            "adam",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::RmsProp { beta2, epsilon },
            dim,
        )
    }

    pub fn amsgrad(dim: usize, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            "amsgrad",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::AmsGrad { beta2, epsilon },
            dim,
        )
    }

    pub fn adabound(
        dim: usize,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        final_scale: f64,
    ) -> Result<Self> {
        Self::new(
            "adabound",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::AdaBound {
                beta2,
                epsilon,
                final_scale,
            },
            dim,
        )
    }

    pub fn adabelief(dim: usize, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            "adabelief",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::AdaBelief {
                beta1,
                beta2,
                epsilon,
            },
            dim,
        )
    }

    pub fn padam(dim: usize, beta1: f64, beta2: f64, epsilon: f64, p: f64) -> Result<Self> {
        Self::new(
            "padam",
            Some((beta1, MomentumMode::DebiasedEma)),
            PreconditionerKind::Padam { beta2, epsilon, p },
            dim,
        )
    }

    pub fn preconditioner(&self) -> PreconditionerKind {
        self.second.kind
    }
}

impl Rule for Baseline {
    fn dim(&self) -> usize {
        self.m_buf.len()
    }

    fn name(&self) -> String {
        self.name.to_string()
    }

    fn advance(&mut self, t: u64, grad: &[f64], direction: &mut [f64]) -> Result<()> {
        if t != self.second.t + 1 {
            return Err(OptimError::State(format!(
                "{} expected step {}, got {t}",
                self.name,
                self.second.t + 1
            )));
        }
        self.second.update(grad);
        match &mut self.momentum {
            Some(m) => {
                m.update(grad);
                m.read(&mut self.m_buf);
            }
            None => self.m_buf.copy_from_slice(grad),
        }
        for ((d, m), psi) in direction.iter_mut().zip(&self.m_buf).zip(self.second.psi()) {
            *d = m / psi;
        }
        Ok(())
    }

    fn psi(&self) -> Vec<f64> {
        self.second.psi().to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    SgdEma,
    Rmsprop,
    Adam,
    Amsgrad,
    Adabound,
    Adabelief,
    Padam,
    Anon,
    AnonAlt,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 11] = [
        Self::Sgd,
        Self::Sgdm,
        Self::SgdEma,
        Self::Rmsprop,
        Self::Adam,
        Self::Amsgrad,
        Self::Adabound,
        Self::Adabelief,
        Self::Padam,
        Self::Anon,
        Self::AnonAlt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Sgdm => "sgdm",
            Self::SgdEma => "sgd-ema",
            Self::Rmsprop => "rmsprop",
            Self::Adam => "adam",
            Self::Amsgrad => "amsgrad",
            Self::Adabound => "adabound",
            Self::Adabelief => "adabelief",
            Self::Padam => "padam",
            Self::Anon => "anon",
            Self::AnonAlt => "anon-alt",
        }
    }

    pub fn is_anon(&self) -> bool {
        matches!(self, Self::Anon | Self::AnonAlt)
    }

    pub fn default_epsilon(&self) -> f64 {
        if self.is_anon() {
            1e-16
        } else {
            1e-8
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| OptimError::Config(format!("unknown optimizer `{s}`")))
    }
}

/// A fully resolved optimizer choice. Fields that do not apply to `kind`
/// are carried but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma: f64,
    pub ratio: u64,
    pub epsilon: f64,
    pub padam_p: f64,
    pub final_scale: f64,
    pub bias_correction: BiasCorrection,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            beta3: 0.5,
            gamma: 1.0,
            ratio: 2,
            epsilon: kind.default_epsilon(),
            padam_p: 0.25,
            final_scale: 1.0,
            bias_correction: BiasCorrection::Momentum,
        }
    }

    pub fn anon(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::new(OptimizerKind::Anon)
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn anon_config(&self) -> Result<AnonConfig> {
        let cfg = AnonConfig {
            idu: IduConfig {
                gamma: self.gamma,
                beta2: self.beta2,
                beta3: self.beta3,
                epsilon: self.epsilon,
                milestones: MilestoneSchedule::new(self.ratio)?,
            },
            beta1: self.beta1,
            bias_correction: self.bias_correction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The baseline pre-conditioner family, `None` for Anon.
    pub fn preconditioner(&self) -> Option<PreconditionerKind> {
        let (beta1, beta2, epsilon) = (self.beta1, self.beta2, self.epsilon);
        Some(match self.kind {
            OptimizerKind::Sgd | OptimizerKind::Sgdm | OptimizerKind::SgdEma => {
                PreconditionerKind::Identity
            }
            OptimizerKind::Rmsprop | OptimizerKind::Adam => {
                PreconditionerKind::RmsProp { beta2, epsilon }
            }
            OptimizerKind::Amsgrad => PreconditionerKind::AmsGrad { beta2, epsilon },
            OptimizerKind::Adabound => PreconditionerKind::AdaBound {
                beta2,
                epsilon,
                final_scale: self.final_scale,
            },
            OptimizerKind::Adabelief => PreconditionerKind::AdaBelief {
                beta1,
                beta2,
                epsilon,
            },
            OptimizerKind::Padam => PreconditionerKind::Padam {
                beta2,
                epsilon,
                p: self.padam_p,
            },
            OptimizerKind::Anon | OptimizerKind::AnonAlt => return None,
        })
    }

    pub fn build(&self, dim: usize) -> Result<Box<dyn Rule + Send>> {
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        Ok(match self.kind {
            OptimizerKind::Sgd => Box::new(Baseline::sgd(dim)?),
            OptimizerKind::Sgdm => Box::new(Baseline::sgdm(dim, b1)?),
            OptimizerKind::SgdEma => Box::new(Baseline::sgd_ema(dim, b1)?),
            OptimizerKind::Rmsprop => Box::new(Baseline::rmsprop(dim, b2, eps)?),
            OptimizerKind::Adam => Box::new(Baseline::adam(dim, b1, b2, eps)?),
            OptimizerKind::Amsgrad => Box::new(Baseline::amsgrad(dim, b1, b2, eps)?),
            OptimizerKind::Adabound => {
                Box::new(Baseline::adabound(dim, b1, b2, eps, self.final_scale)?)
            }
            OptimizerKind::Adabelief => Box::new(Baseline::adabelief(dim, b1, b2, eps)?),
            OptimizerKind::Padam => Box::new(Baseline::padam(dim, b1, b2, eps, self.padam_p)?),
            OptimizerKind::Anon => Box::new(Anon::new(self.anon_config()?, dim)?),
            OptimizerKind::AnonAlt => Box::new(AnonAlt::new(self.anon_config()?, dim)?),
        })
    }
}
