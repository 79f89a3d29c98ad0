//! Gradient-oracle contract.

/// Produces `grad ln pi(x)`, exactly or as an unbiased estimate.
///
/// Every call to [`GradientOracle::grad_log_density`] counts as one
/// evaluation, however much data it touches; budgets are enforced against
/// [`GradientOracle::eval_count`].
pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// Write the gradient at `x` into `out` and bump the evaluation count.
    fn grad_log_density(&mut self, x: &[f64], out: &mut [f64]);

    fn is_stochastic(&self) -> bool;

    fn eval_count(&self) -> u64;
}

impl<T: GradientOracle + ?Sized> GradientOracle for &mut T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn grad_log_density(&mut self, x: &[f64], out: &mut [f64]) {
        (**self).grad_log_density(x, out)
    }

    fn is_stochastic(&self) -> bool {
        (**self).is_stochastic()
    }

    fn eval_count(&self) -> u64 {
        (**self).eval_count()
    }
}
