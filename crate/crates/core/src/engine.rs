//! Event-driven simulation by Poisson thinning.
//!
//! Switch proposals arrive at rate `c |v|`, an upper bound on the switching
//! rate that holds for targets whose log-density gradient is `c`-Lipschitz
//! around the typical set. Refreshments arrive independently at rate `rho`.
//! Both are superposed into one homogeneous stream of candidates.

use std::fmt;

use thiserror::Error;

use crate::oracle::GradientOracle;
use crate::phase::{EventKind, PhasePoint, Trajectory, TrajectoryError};
use crate::rng::{RandomSource, SeededRng};
use crate::transitions::{Transition, TransitionError};
use crate::vecops::{all_finite, dot, norm};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("process stalled: zero speed and zero refresh intensity")]
    Stalled,
    #[error("target dimension {expected} does not match x0 of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "rate bound exceeded on {violations} of {proposals} post-burn-in proposals (limit {limit:.1}%)",
        limit = 100.0 * .max_fraction
    )]
    BoundViolations {
        violations: u64,
        proposals: u64,
        max_fraction: f64,
        ledger: RunLedger,
    },
    #[error("oracle returned a non-finite gradient at t = {t}")]
    NonFiniteGradient { t: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Everything a single chain needs besides the target.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub transition: Transition,
    /// `c` in the proposal rate `c |v|`.
    pub rate_bound_coeff: f64,
    pub refresh_intensity: f64,
    /// Number of gradient-oracle calls; the run stops right after the last.
    pub budget: u64,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// Coordinates kept in the trajectory; all of them when `None`.
    pub record_coords: Option<Vec<usize>>,
    /// Share of the budget during which bound violations are not policed.
    pub burn_in_fraction: f64,
    /// Abort threshold for post-burn-in violations per proposal.
    pub max_violation_fraction: f64,
}

impl SimulationConfig {
    pub fn new(transition: Transition, x0: Vec<f64>) -> Self {
        Self {
            transition,
            rate_bound_coeff: 5.0,
            refresh_intensity: 0.2,
            budget: 100_000,
            x0,
            seed: 0,
            record_coords: None,
            burn_in_fraction: 0.1,
            max_violation_fraction: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let c = self.rate_bound_coeff;
        if !(c > 0.0 && c.is_finite()) {
            return Err(EngineError::Config(format!("rate bound coefficient {c} must be positive")));
        }
        let rho = self.refresh_intensity;
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(EngineError::Config(format!("refresh intensity {rho} must be nonnegative")));
        }
        if self.budget == 0 {
            return Err(EngineError::Config("budget must be at least 1".into()));
        }
        if self.x0.is_empty() || !all_finite(&self.x0) {
            return Err(EngineError::Config("x0 must be a nonempty finite vector".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(EngineError::Config(format!(
                "burn-in fraction {} outside [0, 1)",
                self.burn_in_fraction
            )));
        }
        if !(self.max_violation_fraction >= 0.0) {
            return Err(EngineError::Config("violation fraction must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Counters accumulated over one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLedger {
    pub oracle_calls: u64,
    pub proposals: u64,
    pub accepted_switches: u64,
    pub refreshes: u64,
    pub bound_violations: u64,
    /// Hyperspherical switches outside the map's domain, replaced by a refresh.
    pub fallback_refreshes: u64,
    pub post_burn_in_proposals: u64,
    pub post_burn_in_violations: u64,
}

impl RunLedger {
    /// Sum of counters from independent chains.
    pub fn merge(&mut self, other: &RunLedger) {
        self.oracle_calls += other.oracle_calls;
        self.proposals += other.proposals;
        self.accepted_switches += other.accepted_switches;
        self.refreshes += other.refreshes;
        self.bound_violations += other.bound_violations;
        self.fallback_refreshes += other.fallback_refreshes;
        self.post_burn_in_proposals += other.post_burn_in_proposals;
        self.post_burn_in_violations += other.post_burn_in_violations;
    }
}

impl fmt::Display for RunLedger {
    /// Flat `key=value` block, one counter per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "oracle_calls={}", self.oracle_calls)?;
        writeln!(f, "proposals={}", self.proposals)?;
        writeln!(f, "accepted_switches={}", self.accepted_switches)?;
        writeln!(f, "refreshes={}", self.refreshes)?;
        writeln!(f, "bound_violations={}", self.bound_violations)?;
        writeln!(f, "fallback_refreshes={}", self.fallback_refreshes)?;
        writeln!(f, "post_burn_in_proposals={}", self.post_burn_in_proposals)?;
        writeln!(f, "post_burn_in_violations={}", self.post_burn_in_violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    SwitchProposal,
    Refresh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub dt: f64,
    pub kind: CandidateKind,
}

/// Next point of the superposed proposal/refresh process.
pub fn next_candidate(
    v: &[f64],
    c: f64,
    rho: f64,
    rng: &mut dyn RandomSource,
) -> Result<Candidate, EngineError> {
    let switch_rate = c * norm(v);
    let total = switch_rate + rho;
    if !(total > 0.0) {
        return Err(EngineError::Stalled);
    }
    let dt = rng.exponential(total);
    let kind = if rho == 0.0 || (switch_rate > 0.0 && rng.uniform() * total < switch_rate) {
        CandidateKind::SwitchProposal
    } else {
        CandidateKind::Refresh
    };
    Ok(Candidate { dt, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Acceptance {
    pub accepted: bool,
    pub bound_violated: bool,
}

/// Thinning step. A rate above the bound is accepted outright and flagged.
pub fn accept_switch(lambda: f64, bound: f64, u: f64) -> Acceptance {
    if lambda > bound {
        return Acceptance {
            accepted: true,
            bound_violated: true,
        };
    }
    Acceptance {
        accepted: u * bound < lambda,
        bound_violated: false,
    }
}

/// Simulate until the oracle has been called `config.budget` times.
///
/// The budget is measured on the oracle's own counter, so calls made by the
/// oracle on its own behalf count as well.
pub fn run<O: GradientOracle + ?Sized>(
    config: &SimulationConfig,
    target: &mut O,
    rng: &mut dyn RandomSource,
) -> Result<(Trajectory, RunLedger), EngineError> {
    config.validate()?;
    let p = config.x0.len();
    if target.dim() != p {
        return Err(EngineError::DimensionMismatch {
            expected: target.dim(),
            got: p,
        });
    }
    let c = config.rate_bound_coeff;
    let rho = config.refresh_intensity;
    let burn_in_calls = (config.burn_in_fraction * config.budget as f64).floor() as u64;

    let mut v = vec![0.0; p];
    rng.fill_std_normal(&mut v);
    let start = PhasePoint::new(config.x0.clone(), v.clone(), 0.0)?;
    let mut traj = Trajectory::new(&start, config.record_coords.as_deref())?;
    let mut ledger = RunLedger::default();

    // Position is always recomputed from the last event so that it agrees
    // bitwise with the trajectory's own reconstruction.
    let mut x_event = config.x0.clone();
    let mut t_event = 0.0;
    let mut x = x_event.clone();
    let mut g = vec![0.0; p];
    let mut t = 0.0;
    let first_count = target.eval_count();

    while ledger.oracle_calls < config.budget {
        let cand = next_candidate(&v, c, rho, rng)?;
        t += cand.dt;
        let elapsed = t - t_event;
        for ((xi, x0), vi) in x.iter_mut().zip(&x_event).zip(&v) {
            *xi = x0 + vi * elapsed;
        }
        match cand.kind {
            CandidateKind::Refresh => {
                let before = v.clone();
                rng.fill_std_normal(&mut v);
                traj.record(t, EventKind::Refresh, &before, &v, &x)?;
                ledger.refreshes += 1;
            }
            CandidateKind::SwitchProposal => {
                target.grad_log_density(&x, &mut g);
                ledger.oracle_calls = target.eval_count() - first_count;
                ledger.proposals += 1;
                if !all_finite(&g) {
                    return Err(EngineError::NonFiniteGradient { t });
                }
                let lambda = (-dot(&v, &g)).max(0.0);
                let bound = c * norm(&v);
                let verdict = accept_switch(lambda, bound, rng.uniform());
                let policed = ledger.oracle_calls > burn_in_calls;
                if policed {
                    ledger.post_burn_in_proposals += 1;
                }
                if verdict.bound_violated {
                    ledger.bound_violations += 1;
                    if policed {
                        ledger.post_burn_in_violations += 1;
                    }
                }
                if !verdict.accepted {
                    continue;
                }
                let jump = config.transition.apply(&v, &g, rng)?;
                let kind = if jump.fallback {
                    ledger.fallback_refreshes += 1;
                    EventKind::Refresh
                } else {
                    ledger.accepted_switches += 1;
                    EventKind::Switch
                };
                traj.record(t, kind, &v, &jump.velocity, &x)?;
                v = jump.velocity;
            }
        }
        x_event.copy_from_slice(&x);
        t_event = t;
    }
    traj.extend_to(t)?;

    let allowed = config.max_violation_fraction * ledger.post_burn_in_proposals as f64;
    if ledger.post_burn_in_violations as f64 > allowed {
        return Err(EngineError::BoundViolations {
            violations: ledger.post_burn_in_violations,
            proposals: ledger.post_burn_in_proposals,
            max_fraction: config.max_violation_fraction,
            ledger,
        });
    }
    Ok((traj, ledger))
}

/// [`run`] with a fresh [`SeededRng`] built from `config.seed`.
pub fn run_seeded<O: GradientOracle + ?Sized>(
    config: &SimulationConfig,
    target: &mut O,
) -> Result<(Trajectory, RunLedger), EngineError> {
    let mut rng = SeededRng::new(config.seed);
    run(config, target, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::IsoGaussianTarget;

    struct Flat {
        p: usize,
        calls: u64,
    }

    impl GradientOracle for Flat {
        fn dim(&self) -> usize {
            self.p
        }
        fn grad_log_density(&mut self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
            self.calls += 1;
        }
        fn is_stochastic(&self) -> bool {
            false
        }
        fn eval_count(&self) -> u64 {
            self.calls
        }
    }

    #[test]
    fn candidate_kinds_at_degenerate_rates() {
        let mut rng = SeededRng::new(1);
        for _ in 0..1000 {
            let cand = next_candidate(&[1.0, 0.0], 5.0, 0.0, &mut rng).unwrap();
            assert_eq!(cand.kind, CandidateKind::SwitchProposal);
            let cand = next_candidate(&[0.0, 0.0], 5.0, 0.3, &mut rng).unwrap();
            assert_eq!(cand.kind, CandidateKind::Refresh);
        }
        assert!(matches!(
            next_candidate(&[0.0], 5.0, 0.0, &mut rng),
            Err(EngineError::Stalled)
        ));
    }

    #[test]
    fn candidate_waiting_time_has_the_superposed_mean() {
        let mut rng = SeededRng::new(2);
        let n = 100_000;
        // c |v| = 1.5, rho = 0.5.
        let (mut sum, mut switches) = (0.0, 0usize);
        for _ in 0..n {
            let cand = next_candidate(&[0.3, 0.4], 3.0, 0.5, &mut rng).unwrap();
            sum += cand.dt;
            switches += (cand.kind == CandidateKind::SwitchProposal) as usize;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
        assert!((switches as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn acceptance_examples() {
        for u in [0.0, 0.3, 0.999_999] {
            assert!(!accept_switch(0.0, 2.0, u).accepted);
            assert!(accept_switch(2.0, 2.0, u).accepted);
        }
        let over = accept_switch(3.0, 2.0, 0.99);
        assert!(over.accepted && over.bound_violated);

        let mut rng = SeededRng::new(4);
        let n = 100_000;
        let hits = (0..n).filter(|_| accept_switch(0.3, 1.0, rng.uniform()).accepted).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    fn gauss_config(transition: Transition, p: usize, budget: u64) -> SimulationConfig {
        let mut config = SimulationConfig::new(transition, vec![1.0; p]);
        config.budget = budget;
        config.seed = 17;
        config
    }

    #[test]
    fn budget_of_one_makes_one_call() {
        let config = gauss_config(Transition::Bps, 3, 1);
        let mut target = IsoGaussianTarget::new(3);
        let (_, ledger) = run_seeded(&config, &mut target).unwrap();
        assert_eq!(ledger.oracle_calls, 1);
        assert_eq!(target.eval_count(), 1);
        assert!(ledger.proposals <= 1);
    }

    #[test]
    fn budget_is_exact() {
        for budget in [7, 1000, 12_345] {
            let config = gauss_config(Transition::Bps, 4, budget);
            let mut target = IsoGaussianTarget::new(4);
            let (_, ledger) = run_seeded(&config, &mut target).unwrap();
            assert_eq!(ledger.oracle_calls, budget);
            assert_eq!(ledger.proposals, budget);
            assert!(ledger.accepted_switches <= ledger.proposals);
        }
    }

    #[test]
    fn flat_target_only_refreshes() {
        let config = gauss_config(Transition::Bps, 2, 500);
        let mut target = Flat { p: 2, calls: 0 };
        let (traj, ledger) = run_seeded(&config, &mut target).unwrap();
        assert_eq!(ledger.accepted_switches, 0);
        assert!(traj.events().iter().all(|e| e.kind == EventKind::Refresh));
        assert_eq!(traj.events().len() as u64, ledger.refreshes);
    }

    #[test]
    fn identical_seeds_replay_bitwise() {
        let config = gauss_config(Transition::PureReflection, 3, 5000);
        let out = |config: &SimulationConfig| {
            let mut target = IsoGaussianTarget::new(3);
            let (traj, _) = run_seeded(config, &mut target).unwrap();
            let mut buf = Vec::new();
            traj.write_csv(&mut buf, None).unwrap();
            buf
        };
        assert_eq!(out(&config), out(&config));
        let mut other = config.clone();
        other.seed += 1;
        assert_ne!(out(&config), out(&other));
    }

    #[test]
    fn bps_speed_is_constant_between_refreshes() {
        let config = gauss_config(Transition::Bps, 5, 20_000);
        let mut target = IsoGaussianTarget::new(5);
        let (traj, ledger) = run_seeded(&config, &mut target).unwrap();
        assert!(ledger.accepted_switches > 100);
        for e in traj.events().iter().filter(|e| e.kind == EventKind::Switch) {
            let (a, b) = (norm(&e.v_before), norm(&e.v_after));
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn rate_bound_violations_abort_after_burn_in() {
        // A bound coefficient far below the Gaussian's curvature at x0 = 10.
        let mut config = gauss_config(Transition::Bps, 2, 2000);
        config.rate_bound_coeff = 0.01;
        config.x0 = vec![10.0, 10.0];
        let mut target = IsoGaussianTarget::new(2);
        match run_seeded(&config, &mut target) {
            Err(EngineError::BoundViolations { ledger, .. }) => {
                assert_eq!(ledger.oracle_calls, 2000);
                assert!(ledger.post_burn_in_violations > 0);
            }
            other => panic!("expected an abort, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut target = IsoGaussianTarget::new(2);
        let mut config = gauss_config(Transition::Bps, 2, 0);
        assert!(matches!(run_seeded(&config, &mut target), Err(EngineError::Config(_))));
        config.budget = 10;
        config.rate_bound_coeff = 0.0;
        assert!(matches!(run_seeded(&config, &mut target), Err(EngineError::Config(_))));
        let config = gauss_config(Transition::Bps, 3, 10);
        assert!(matches!(
            run_seeded(&config, &mut target),
            Err(EngineError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }
}
