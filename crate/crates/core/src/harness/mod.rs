//! Experiment harness: configuration, execution, file emission, sweeps and
//! reports. The `anon-harness` binary is a thin clap front end over this
//! module.

pub mod config;
pub mod experiment;
pub mod output;
pub mod report;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

use crate::error::OptimError;

pub use config::{ExperimentConfig, ExperimentKind, RawConfig};
pub use experiment::{run_experiment, RunOutcome};
pub use report::{emit_report, ReportFormat};
pub use sweep::{run_sweep, SweepOutcome};

/// Exit codes of the harness binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const UNWRITABLE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot read {}: {message}", path.display())]
    Read { path: PathBuf, message: String },

    #[error(transparent)]
    Optim(OptimError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Io { .. } => exit::UNWRITABLE,
            Self::Read { .. } | Self::Optim(_) => exit::FAILURE,
        }
    }
}

impl From<OptimError> for HarnessError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::Config(m) => Self::Config(m),
            other => Self::Optim(other),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
