//! Stochastic gradient ascent for the posterior mode.

use std::sync::Arc;

use crate::vecops::{all_finite, norm};

use super::logistic::{LogisticData, LogisticPosterior};
use super::TargetError;

/// Iterates beyond this norm count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Step `gamma0`, halved every `halving_interval` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSchedule {
    pub steps: usize,
    pub gamma0: f64,
    pub halving_interval: usize,
}

impl SgdSchedule {
    /// Ten phases: the step halves every `steps / 10` steps.
    pub fn decaying(steps: usize, gamma0: f64) -> Self {
        Self {
            steps,
            gamma0,
            halving_interval: (steps / 10).max(1),
        }
    }

    pub fn constant(steps: usize, gamma0: f64) -> Self {
        Self {
            steps,
            gamma0,
            halving_interval: usize::MAX,
        }
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.gamma0 * 0.5f64.powi((k / self.halving_interval) as i32)
    }
}

/// `x <- x + gamma_k * grad(x)` for the whole schedule.
pub fn sgd_ascent<F>(x0: &[f64], schedule: &SgdSchedule, mut grad: F) -> Result<Vec<f64>, TargetError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    for k in 0..schedule.steps {
        grad(&x, &mut g);
        let gamma = schedule.step_size(k);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi += gamma * gi;
        }
        if !all_finite(&x) || norm(&x) > DIVERGENCE_NORM {
            return Err(TargetError::Divergence { step: k, gamma0: schedule.gamma0 });
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdOptions {
    pub steps: usize,
    pub batch_size: usize,
    /// Initial step; tuned by a doubling search when `None`.
    pub gamma0: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdFit {
    pub beta_hat: Vec<f64>,
    pub gamma0: f64,
    /// Rows read by the fit itself (`steps * batch_size`).
    pub touches: u64,
    /// Rows read while tuning `gamma0`, reported separately.
    pub tuning_touches: u64,
}

const TRIAL_STEPS: usize = 20;
const GAMMA_START: f64 = 1e-3;

/// Mode of the logistic posterior by minibatch SGD started at zero.
///
/// Each step moves along the per-observation average of the plain
/// subsampled gradient, so the step size does not scale with `N`.
pub fn sgd_fit(data: Arc<LogisticData>, prior_variance: f64, options: &SgdOptions) -> Result<SgdFit, TargetError> {
    if options.steps == 0 {
        return Err(TargetError::Config("SGD needs at least one step".into()));
    }
    let n_rows = data.len() as f64;
    let p = data.dim();
    let mut tuning_touches = 0;
    let gamma0 = match options.gamma0 {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(TargetError::Config(format!("step size {g} must be positive"))),
        None => {
            let (g, touches) = tune_step_size(&data, prior_variance, options)?;
            tuning_touches = touches;
            g
        }
    };
    let mut post = LogisticPosterior::new(data, prior_variance)?
        .with_batches(super::GradientMode::Subsampled, options.batch_size, options.seed)?;
    let schedule = SgdSchedule::decaying(options.steps, gamma0);
    let beta_hat = sgd_ascent(&vec![0.0; p], &schedule, |beta, g| {
        let batch = post.draw_batch();
        post.grad_subsampled(beta, &batch, g).expect("dimensions fixed above");
        g.iter_mut().for_each(|x| *x /= n_rows);
    })?;
    Ok(SgdFit {
        beta_hat,
        gamma0,
        touches: post.touches(),
        tuning_touches,
    })
}

/// Doubling search: short constant-step trials from zero, keeping the step
/// whose trial ends at the highest log posterior.
fn tune_step_size(data: &Arc<LogisticData>, prior_variance: f64, options: &SgdOptions) -> Result<(f64, u64), TargetError> {
    let n_rows = data.len() as f64;
    let p = data.dim();
    let mut post = LogisticPosterior::new(data.clone(), prior_variance)?
        .with_batches(super::GradientMode::Subsampled, options.batch_size, options.seed ^ 0x5eed)?;
    let mut best: Option<(f64, f64)> = None;
    let mut gamma = GAMMA_START;
    for _ in 0..40 {
        let trial = sgd_ascent(&vec![0.0; p], &SgdSchedule::constant(TRIAL_STEPS, gamma), |beta, g| {
            let batch = post.draw_batch();
            post.grad_subsampled(beta, &batch, g).expect("dimensions fixed above");
            g.iter_mut().for_each(|x| *x /= n_rows);
        });
        let score = match trial {
            Ok(beta) => post.log_density(&beta)?,
            Err(_) => f64::NEG_INFINITY,
        };
        match best {
            Some((_, s)) if !(score > s) => break,
            _ => best = Some((gamma, score)),
        }
        gamma *= 2.0;
    }
    let (gamma, score) = best.expect("at least one trial");
    if !score.is_finite() {
        return Err(TargetError::Divergence { step: 0, gamma0: gamma });
    }
    Ok((gamma, post.touches()))
}
