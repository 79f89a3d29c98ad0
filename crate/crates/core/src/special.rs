//! Numerically stable special functions used by the transition maps.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use statrs::function::erf::erfc;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this point the left-tail asymptotic series is used.
const TAIL_SWITCH: f64 = -8.0;

/// `ln Phi(z)` for the standard normal CDF, without underflow in either tail.
///
/// Right half-line: `ln(1 - Phi(-z))` through `ln_1p`, so values like
/// `ln Phi(10) ~ -7.6e-24` keep full relative precision. Left tail below
/// `z = -8`: Mills-ratio asymptotic series.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 0.0 {
        (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else if z >= TAIL_SWITCH {
        (0.5 * erfc(-z * FRAC_1_SQRT_2)).ln()
    } else if z == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_normal_left_tail(z)
    }
}

/// `ln Phi(z)` for `z < -8`:
/// `-z^2/2 - ln(-z) - ln(2 pi)/2 + ln(1 - 1/z^2 + 3/z^4 - 15/z^6 + ...)`.
fn log_normal_left_tail(z: f64) -> f64 {
    let inv_z2 = 1.0 / (z * z);
    // Terms shrink until k ~ z^2/2 (>= 32 here); 16 terms is well past 1e-16.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=16 {
        term *= -((2 * k - 1) as f64) * inv_z2;
        sum += term;
    }
    -0.5 * z * z - (-z).ln() - HALF_LN_2PI + sum.ln()
}

/// `ln phi(z)`, the standard normal log density.
#[inline]
pub fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`.
#[inline]
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `ln(1 - e^x)` for `x <= 0`, accurate at both ends.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Nodes and weights of an n-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn order16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    /// `ln` of the integral over `[a, b]` of `exp(log_f)`.
    pub fn log_integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, log_f: F) -> f64 {
        if b <= a {
            return f64::NEG_INFINITY;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut terms = [0.0_f64; 64];
        let n = self.nodes.len();
        assert!(n <= terms.len());
        let mut peak = f64::NEG_INFINITY;
        for (slot, (&x, &w)) in terms.iter_mut().zip(self.nodes.iter().zip(&self.weights)) {
            *slot = log_f(mid + half * x) + w.ln();
            peak = peak.max(*slot);
        }
        if peak == f64::NEG_INFINITY {
            return peak;
        }
        let s: f64 = terms[..n].iter().map(|t| (t - peak).exp()).sum();
        peak + s.ln() + half.ln()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
