//! Piecewise linear Markov process samplers.
//!
//! A sampler moves a particle along straight lines and, at the events of an
//! inhomogeneous Poisson process, changes its velocity through a transition
//! function. Events are simulated exactly by thinning against a linear upper
//! bound on the switching rate.

pub mod diagnostics;
pub mod engine;
pub mod interp;
pub mod oracle;
pub mod phase;
pub mod rng;
pub mod special;
pub mod targets;
pub mod transitions;
pub mod vecops;

pub use engine::{run, run_seeded, EngineError, RunLedger, SimulationConfig};
pub use oracle::GradientOracle;
pub use phase::{switching_rate, Event, EventKind, PhasePoint, Trajectory, TrajectoryError};
pub use rng::{RandomSource, SeededRng};
pub use transitions::{
    bps_reflection, pure_reflection, HypersphericalMap, Jump, ThetaMode, Transition,
    TransitionError,
};
