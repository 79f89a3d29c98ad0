use crate::oracle::GradientOracle;

/// Standard multivariate normal `N(0, I_p)`; `grad ln pi(x) = -x`.
#[derive(Debug, Clone)]
pub struct IsoGaussianTarget {
    p: usize,
    calls: u64,
}

impl IsoGaussianTarget {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        Self { p, calls: 0 }
    }
}

impl GradientOracle for IsoGaussianTarget {
    fn dim(&self) -> usize {
        self.p
    }

    fn grad_log_density(&mut self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -xi;
        }
        self.calls += 1;
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    fn eval_count(&self) -> u64 {
        self.calls
    }
}
