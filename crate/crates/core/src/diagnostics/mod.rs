//! Invariance checks and estimators over trajectories.

mod fp;
mod ks;
mod path;

use thiserror::Error;

use crate::phase::TrajectoryError;
use crate::transitions::TransitionError;

pub use fp::{fp_residual, FPResidualReport, ResidualGrid, ResidualPoint, Side};
pub use ks::{
    ks_critical_value_1pct, ks_statistic, ks_two_sample, ks_two_sample_critical_value_1pct,
    MIN_ASYMPTOTIC_N,
};
pub use path::{
    batch_means, discretize, mean_and_standard_error, path_moment, path_moment_window,
    Discretized,
};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("time average over an empty window")]
    ZeroDuration,
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}
