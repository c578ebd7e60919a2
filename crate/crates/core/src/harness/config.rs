//! Flat key-value experiment configuration (TOML), CLI overrides and
//! default resolution.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, HarnessResult};
use crate::anon::BiasCorrection;
use crate::frame::{FrameOptions, ScheduleKind, ScheduleSpec};
use crate::optim::{OptimizerKind, OptimizerSpec};
use crate::testbed::functions::TestFunction;
use crate::testbed::online::power_of_ten_checkpoints;

/// Environment variable that may supply the output directory.
pub const OUT_ENV: &str = "ANON_HARNESS_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Reddi,
    Function,
    Smoke,
    Adaptivity,
    Ablation,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Reddi => "reddi",
            Self::Function => "function",
            Self::Smoke => "smoke",
            Self::Adaptivity => "adaptivity",
            Self::Ablation => "ablation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> HarnessResult<Self> {
        [
            Self::Reddi,
            Self::Function,
            Self::Smoke,
            Self::Adaptivity,
            Self::Ablation,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| HarnessError::Config(format!("experiment: unknown kind `{s}`")))
    }
}

/// A configuration as written by a user: every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<ExperimentKind>,
    pub optimizer: Option<OptimizerKind>,
    pub gamma: Option<f64>,
    pub lr: Option<f64>,
    pub schedule: Option<ScheduleKind>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub ratio: Option<u64>,
    pub epsilon: Option<f64>,
    pub padam_p: Option<f64>,
    pub final_scale: Option<f64>,
    pub paper_literal: Option<bool>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<f64>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub checkpoints: Option<Vec<u64>>,
    pub theta0: Option<f64>,
    pub function: Option<TestFunction>,
    pub start: Option<[f64; 2]>,
    pub lr_search: Option<bool>,
    pub landscape_step: Option<u64>,
    pub grid_n: Option<usize>,
    pub grid_extent: Option<f64>,
    pub trials: Option<usize>,
    pub sweep_optimizer: Option<Vec<OptimizerKind>>,
    pub sweep_gamma: Option<Vec<f64>>,
    pub sweep_lr: Option<Vec<f64>>,
    pub sweep_beta3: Option<Vec<f64>>,
    pub sweep_ratio: Option<Vec<u64>>,
}

macro_rules! merge_fields {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f; } )*
    };
}

impl RawConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    /// Overlays every key set in `other`; `other` wins.
    pub fn merge(mut self, other: RawConfig) -> Self {
        merge_fields!(self, other;
            experiment, optimizer, gamma, lr, schedule, beta1, beta2, beta3, ratio,
            epsilon, padam_p, final_scale, paper_literal, weight_decay, clip_norm,
            steps, seed, out, checkpoints, theta0, function, start, lr_search,
            landscape_step, grid_n, grid_extent, trials, sweep_optimizer, sweep_gamma,
            sweep_lr, sweep_beta3, sweep_ratio,
        );
        self
    }

    /// Materializes every default and validates the result.
    pub fn resolve(self) -> HarnessResult<ExperimentConfig> {
        for (key, empty) in [
            (
                "sweep_optimizer",
                self.sweep_optimizer.as_ref().map(Vec::is_empty),
            ),
            ("sweep_gamma", self.sweep_gamma.as_ref().map(Vec::is_empty)),
            ("sweep_lr", self.sweep_lr.as_ref().map(Vec::is_empty)),
            ("sweep_beta3", self.sweep_beta3.as_ref().map(Vec::is_empty)),
            ("sweep_ratio", self.sweep_ratio.as_ref().map(Vec::is_empty)),
        ] {
            if empty == Some(true) {
                return Err(bad(key, "empty grid axis"));
            }
        }
        let experiment = self
            .experiment
            .ok_or_else(|| HarnessError::Config("experiment: missing required key".into()))?;
        let optimizer = self.optimizer.unwrap_or(OptimizerKind::Anon);
        let default_steps = match experiment {
            ExperimentKind::Reddi => 10_000,
            ExperimentKind::Function => 2000,
            ExperimentKind::Smoke | ExperimentKind::Ablation => 200,
            ExperimentKind::Adaptivity => 512,
        };
        let steps = self.steps.unwrap_or(default_steps);
        let schedule = self.schedule.unwrap_or(match experiment {
            ExperimentKind::Reddi => ScheduleKind::InverseSqrt,
            _ => ScheduleKind::Constant,
        });
        let function = self.function.unwrap_or(TestFunction::BealeLog);
        let is_ablation = experiment == ExperimentKind::Ablation;
        let cfg = ExperimentConfig {
            experiment,
            optimizer,
            gamma: self.gamma.unwrap_or(1.0),
            lr: self.lr.unwrap_or(0.1),
            schedule,
            beta1: self.beta1.unwrap_or(0.9),
            beta2: self.beta2.unwrap_or(0.999),
            beta3: self.beta3.unwrap_or(0.5),
            ratio: self.ratio.unwrap_or(2),
            epsilon: self.epsilon.unwrap_or(optimizer.default_epsilon()),
            padam_p: self.padam_p.unwrap_or(0.25),
            final_scale: self.final_scale.unwrap_or(1.0),
            paper_literal: self.paper_literal.unwrap_or(false),
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            steps,
            seed: self.seed.unwrap_or(0),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            checkpoints: self
                .checkpoints
                .unwrap_or_else(|| power_of_ten_checkpoints(steps)),
            theta0: self.theta0.unwrap_or(1.0),
            function,
            start: self.start.unwrap_or(function.default_start()),
            lr_search: self.lr_search.unwrap_or(false),
            landscape_step: self.landscape_step.unwrap_or(100),
            grid_n: self.grid_n.unwrap_or(101),
            grid_extent: self.grid_extent.unwrap_or(4.5),
            trials: self.trials.unwrap_or(100),
            sweep_optimizer: self.sweep_optimizer.unwrap_or_default(),
            sweep_gamma: self.sweep_gamma.unwrap_or_default(),
            sweep_lr: self.sweep_lr.unwrap_or_default(),
            sweep_beta3: self.sweep_beta3.unwrap_or_else(|| {
                if is_ablation {
                    vec![0.1, 0.3, 0.5, 0.7, 0.9]
                } else {
                    Vec::new()
                }
            }),
            sweep_ratio: self.sweep_ratio.unwrap_or_else(|| {
                if is_ablation {
                    vec![2, 3, 4]
                } else {
                    Vec::new()
                }
            }),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Layers the config file (if any), then [`OUT_ENV`], then `flags`; later
/// sources win.
pub fn load(file: Option<&Path>, flags: RawConfig) -> HarnessResult<ExperimentConfig> {
    let mut raw = match file {
        Some(path) => RawConfig::from_path(path)?,
        None => RawConfig::default(),
    };
    if let Some(out) = std::env::var_os(OUT_ENV) {
        raw.out = Some(PathBuf::from(out));
    }
    raw.merge(flags).resolve()
}

/// A fully resolved configuration: every default materialized. This is
/// what gets written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub optimizer: OptimizerKind,
    pub gamma: f64,
    pub lr: f64,
    pub schedule: ScheduleKind,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub ratio: u64,
    pub epsilon: f64,
    pub padam_p: f64,
    pub final_scale: f64,
    pub paper_literal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub steps: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoints: Vec<u64>,
    pub theta0: f64,
    pub function: TestFunction,
    pub start: [f64; 2],
    pub lr_search: bool,
    pub landscape_step: u64,
    pub grid_n: usize,
    pub grid_extent: f64,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_optimizer: Vec<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_lr: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_beta3: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_ratio: Vec<u64>,
}

fn bad(key: &str, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> HarnessResult<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(key, format!("{v} is not finite")))
            }
        };
        for (key, v) in [
            ("gamma", self.gamma),
            ("lr", self.lr),
            ("epsilon", self.epsilon),
            ("theta0", self.theta0),
            ("grid_extent", self.grid_extent),
        ] {
            finite(key, v)?;
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(bad(key, format!("{b} outside [0, 1)")));
            }
        }
        if !(self.beta3 > 0.0 && self.beta3 < 1.0) {
            return Err(bad("beta3", format!("{} outside (0, 1)", self.beta3)));
        }
        if self.ratio < 2 {
            return Err(bad("ratio", format!("{} must be >= 2", self.ratio)));
        }
        if self.epsilon < 0.0 {
            return Err(bad("epsilon", format!("{} must be >= 0", self.epsilon)));
        }
        if self.optimizer.is_anon() && self.gamma < 0.0 && self.epsilon == 0.0 {
            return Err(bad("epsilon", "must be > 0 when gamma < 0"));
        }
        if self.lr <= 0.0 {
            return Err(bad("lr", format!("{} must be positive", self.lr)));
        }
        if self.steps == 0 {
            return Err(bad("steps", "must be >= 1"));
        }
        if !(-1.0..=1.0).contains(&self.theta0) {
            return Err(bad("theta0", format!("{} outside [-1, 1]", self.theta0)));
        }
        if self.start.iter().any(|x| !x.is_finite()) {
            return Err(bad("start", "must be finite"));
        }
        if self.grid_n == 0 || self.grid_extent <= 0.0 {
            return Err(bad("grid_n", "grid must be non-empty with positive extent"));
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be >= 1"));
        }
        if self.landscape_step == 0 {
            return Err(bad("landscape_step", "must be >= 1"));
        }
        if self.checkpoints.contains(&0) {
            return Err(bad("checkpoints", "steps are 1-based"));
        }
        for (key, v) in [
            ("weight_decay", self.weight_decay),
            ("clip_norm", self.clip_norm),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(bad(key, format!("{v} must be >= 0")));
                }
            }
        }
        if matches!(
            self.experiment,
            ExperimentKind::Reddi | ExperimentKind::Adaptivity
        ) && (self.weight_decay.is_some() || self.clip_norm.is_some())
        {
            let key = if self.weight_decay.is_some() {
                "weight_decay"
            } else {
                "clip_norm"
            };
            return Err(bad(
                key,
                "only applies to function, smoke and ablation runs",
            ));
        }
        if self.sweep_lr.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(bad("sweep_lr", "rates must be positive"));
        }
        if self.sweep_gamma.iter().any(|v| !v.is_finite()) {
            return Err(bad("sweep_gamma", "values must be finite"));
        }
        if self.sweep_beta3.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(bad("sweep_beta3", "values must lie in (0, 1)"));
        }
        if self.sweep_ratio.iter().any(|&r| r < 2) {
            return Err(bad("sweep_ratio", "values must be >= 2"));
        }
        self.optimizer_spec().build(1).map_err(HarnessError::from)?;
        Ok(())
    }

    pub fn optimizer_spec(&self) -> OptimizerSpec {
        OptimizerSpec {
            kind: self.optimizer,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            gamma: self.gamma,
            ratio: self.ratio,
            epsilon: self.epsilon,
            padam_p: self.padam_p,
            final_scale: self.final_scale,
            bias_correction: if self.paper_literal {
                BiasCorrection::PaperLiteral
            } else {
                BiasCorrection::Momentum
            },
        }
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        self.schedule_with(self.lr)
    }

    pub fn schedule_with(&self, lr: f64) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.schedule,
            eta0: lr,
        }
    }

    pub fn frame_options(&self) -> FrameOptions {
        FrameOptions {
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }

    pub fn has_sweep(&self) -> bool {
        !(self.sweep_optimizer.is_empty()
            && self.sweep_gamma.is_empty()
            && self.sweep_lr.is_empty()
            && self.sweep_beta3.is_empty()
            && self.sweep_ratio.is_empty())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        RawConfig::from_toml(text)?.resolve()
    }

    /// SHA-256 of the canonical JSON of every setting that can change an
    /// emitted number (the output directory is excluded).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        let json = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"reddi\"\noptimizer = \"anon\"\ngamma = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.beta1, 0.9);
        assert_eq!(cfg.beta2, 0.999);
        assert_eq!(cfg.beta3, 0.5);
        assert_eq!(cfg.epsilon, 1e-16);
        assert_eq!(cfg.ratio, 2);
        assert_eq!(cfg.steps, 10_000);
        assert_eq!(cfg.checkpoints, vec![10, 100, 1000, 10_000]);
        assert_eq!(cfg.schedule, ScheduleKind::InverseSqrt);
        assert_eq!(cfg.theta0, 1.0);
    }

    #[test]
    fn overrides_win() {
        let file = RawConfig::from_toml("experiment = \"smoke\"\ngamma = 1.0\n").unwrap();
        let flags = RawConfig {
            gamma: Some(-0.5),
            ..RawConfig::default()
        };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.gamma, -0.5);
        assert_eq!(cfg.experiment, ExperimentKind::Smoke);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let e =
            ExperimentConfig::from_toml("experiment = \"smoke\"\ngamma = \"abc\"\n").unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_toml("experiment = \"smoke\"\ngama = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("gama"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"smoke\"\nbeta2 = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("beta2"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"smoke\"\ngamma = -1\nepsilon = 0\n")
            .unwrap_err();
        assert!(e.to_string().contains("epsilon"), "{e}");
        let e = ExperimentConfig::from_toml("optimizer = \"adam\"\n").unwrap_err();
        assert!(e.to_string().contains("experiment"), "{e}");
        let e =
            ExperimentConfig::from_toml("experiment = \"smoke\"\nsweep_ratio = [1]\n").unwrap_err();
        assert!(e.to_string().contains("sweep_ratio"), "{e}");
        let e =
            ExperimentConfig::from_toml("experiment = \"smoke\"\nsweep_gamma = []\n").unwrap_err();
        assert!(e.to_string().contains("sweep_gamma"), "{e}");
    }

    #[test]
    fn emitted_toml_round_trips() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"function\"\noptimizer = \"adabelief\"\nlr = 0.003\nclip_norm = 5.0\nsweep_gamma = [-0.5, 0.5]\nstart = [-2.5, -1.5]\n",
        )
        .unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = ExperimentConfig::from_toml("experiment = \"smoke\"\nout = \"a\"\n").unwrap();
        let b = ExperimentConfig::from_toml("experiment = \"smoke\"\nout = \"b\"\n").unwrap();
        let c = ExperimentConfig::from_toml("experiment = \"smoke\"\nseed = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn ablation_defaults_to_the_full_grid() {
        let cfg = ExperimentConfig::from_toml("experiment = \"ablation\"\n").unwrap();
        assert_eq!(cfg.sweep_beta3, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_eq!(cfg.sweep_ratio, vec![2, 3, 4]);
    }
}
