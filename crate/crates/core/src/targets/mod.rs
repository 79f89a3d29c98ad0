//! Target distributions and their gradient oracles.

mod gaussian;
pub mod logistic;
pub mod sgd;

use thiserror::Error;

pub use gaussian::IsoGaussianTarget;
pub use logistic::{
    stable_sigmoid, true_beta, Anchor, GradientMode, LogisticData, LogisticPosterior,
};
pub use sgd::{sgd_ascent, sgd_fit, SgdFit, SgdOptions, SgdSchedule};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("SGD diverged at step {step} with initial step size {gamma0}; lower the step size")]
    Divergence { step: usize, gamma0: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
