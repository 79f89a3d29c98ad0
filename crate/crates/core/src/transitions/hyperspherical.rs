//! The nonlinear hyperspherical transition.
//!
//! In the plane spanned by `v` and `g = grad ln pi(x)` the map sends a
//! velocity with speed `r` and incoming angle `theta` (measured against `-g`)
//! to speed `r'(theta)` and outgoing angle `theta'(r)` (measured against
//! `+g`). `theta'` solves
//!
//! ```text
//! d theta'/dr = k r^p exp(-r^2/2) / (cos theta' sin^(p-2) theta'),
//! theta'(0) = 0, theta'(inf) = pi/2,
//! ```
//!
//! and `r'` is its inverse. Two curves are available: the exact one, obtained
//! by separating variables and integrating `r^p exp(-r^2/2)` by quadrature in
//! log space (`k` underflows double precision for moderate `p`), and the
//! large-`p` closed form `pi/2 - sqrt(-2 ln Phi(sqrt2 (r - sqrt p)) / (p-2))`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, SQRT_2};
use std::io::{self, Write};

use super::{PlaneDecomposition, TransitionError};
use crate::interp::MonotoneCubic;
use crate::special::{
    log1m_exp, log_add_exp, log_std_normal_cdf, log_std_normal_pdf, GaussLegendre,
};

/// Which `theta'` curve backs a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThetaMode {
    Asymptotic,
    ExactQuadrature,
}

impl ThetaMode {
    pub fn name(self) -> &'static str {
        match self {
            ThetaMode::Asymptotic => "asymptotic",
            ThetaMode::ExactQuadrature => "exact",
        }
    }
}

/// An angle together with its complement `pi/2 - theta`, each carried at full
/// relative precision (near `pi/2` the complement is the informative part).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    pub theta: f64,
    pub complement: f64,
}

impl Angle {
    fn from_sin_cos(sin: f64, cos: f64) -> Self {
        Self {
            theta: sin.atan2(cos),
            complement: cos.atan2(sin),
        }
    }

    pub fn cos(&self) -> f64 {
        self.complement.sin()
    }

    pub fn sin(&self) -> f64 {
        self.complement.cos()
    }
}

/// Closed-form large-`p` approximation of `theta'(r)`.
///
/// This is the raw expression: for small `p` it goes negative on an interval
/// near the origin, which [`HypersphericalMap`] excludes from its domain.
pub fn theta_prime_asymptotic(r: f64, p: usize) -> f64 {
    asymptotic_angle(r, p as f64).theta
}

fn asymptotic_angle(r: f64, p: f64) -> Angle {
    let z = SQRT_2 * (r - p.sqrt());
    let ln_phi = log_std_normal_cdf(z);
    debug_assert!(ln_phi <= 0.0);
    let complement = (-2.0 * ln_phi / (p - 2.0)).sqrt();
    Angle {
        theta: FRAC_PI_2 - complement,
        complement,
    }
}

fn asymptotic_slope(r: f64, p: f64) -> f64 {
    let z = SQRT_2 * (r - p.sqrt());
    let complement = asymptotic_angle(r, p).complement;
    SQRT_2 * (log_std_normal_pdf(z) - log_std_normal_cdf(z)).exp() / ((p - 2.0) * complement)
}

/// Log-space quadrature of `I(r) = int_0^r t^p exp(-t^2/2) dt` and of its
/// complement `int_r^inf`.
///
/// Cells are sized so the log-integrand moves by at most `cell_scale` across
/// each; a 16-point Gauss-Legendre rule per cell is then exact to rounding.
/// The stretch `[0, t0]` uses the termwise-integrated Taylor series of
/// `exp(-t^2/2)`, and the tail beyond the last knot its leading asymptotic.
#[derive(Debug, Clone)]
struct ChiQuadrature {
    p: f64,
    knots: Vec<f64>,
    log_head: Vec<f64>,
    log_tail: Vec<f64>,
    log_total: f64,
}

const SERIES_CUTOFF: f64 = 0.01;
const MAX_CELL: f64 = 0.05;

impl ChiQuadrature {
    fn new(p: f64, cell_scale: f64) -> Self {
        let rule = GaussLegendre::order16();
        let top = p.sqrt() + 40.0;
        let mut knots = vec![SERIES_CUTOFF];
        let mut t = SERIES_CUTOFF;
        while t < top {
            let slope = (p / t - t).abs();
            let w = (cell_scale / slope).min(MAX_CELL * cell_scale);
            t = (t + w).min(top);
            knots.push(t);
        }
        let log_f = |t: f64| p * t.ln() - 0.5 * t * t;
        let cells: Vec<f64> = knots
            .windows(2)
            .map(|w| rule.log_integrate(w[0], w[1], log_f))
            .collect();

        let mut log_head = Vec::with_capacity(knots.len());
        log_head.push(log_series_head(p, SERIES_CUTOFF));
        for c in &cells {
            let prev = *log_head.last().unwrap();
            log_head.push(log_add_exp(prev, *c));
        }
        let mut log_tail = vec![0.0; knots.len()];
        log_tail[knots.len() - 1] = log_asymptotic_tail(p, top);
        for j in (0..cells.len()).rev() {
            log_tail[j] = log_add_exp(log_tail[j + 1], cells[j]);
        }
        let log_total = log_add_exp(*log_head.last().unwrap(), log_tail[knots.len() - 1]);
        Self {
            p,
            knots,
            log_head,
            log_tail,
            log_total,
        }
    }

    /// `(ln I(r), ln (I(inf) - I(r)))`.
    fn log_split(&self, r: f64) -> (f64, f64) {
        let p = self.p;
        let last = self.knots.len() - 1;
        if r <= 0.0 {
            return (f64::NEG_INFINITY, self.log_total);
        }
        if r <= SERIES_CUTOFF {
            let head = log_series_head(p, r);
            let rule = GaussLegendre::order16();
            let mid = rule.log_integrate(r, SERIES_CUTOFF, |t| p * t.ln() - 0.5 * t * t);
            return (head, log_add_exp(self.log_tail[0], mid));
        }
        if r >= self.knots[last] {
            let tail = log_asymptotic_tail(p, r);
            return (self.log_total + log1m_exp(tail - self.log_total), tail);
        }
        let j = self.knots.partition_point(|&k| k <= r) - 1;
        let rule = GaussLegendre::order16();
        let log_f = |t: f64| p * t.ln() - 0.5 * t * t;
        let left = rule.log_integrate(self.knots[j], r, log_f);
        let right = rule.log_integrate(r, self.knots[j + 1], log_f);
        (
            log_add_exp(self.log_head[j], left),
            log_add_exp(self.log_tail[j + 1], right),
        )
    }

    /// `(ln sin theta', ln cos theta')` from the separated ODE:
    /// `sin^(p-1) theta'(r) = I(r) / I(inf)`.
    fn log_sin_cos(&self, r: f64) -> (f64, f64) {
        let (log_head, log_tail) = self.log_split(r);
        let log_q = log_tail - self.log_total;
        let log_p = if log_q < -LN_2 {
            log1m_exp(log_q)
        } else {
            log_head - self.log_total
        };
        let m = self.p - 1.0;
        let log_sin = log_p / m;
        let log_cos = 0.5 * (-(2.0 * log_p / m).exp_m1()).ln();
        (log_sin, log_cos)
    }

    fn angle(&self, r: f64) -> Angle {
        if r <= 0.0 {
            return Angle {
                theta: 0.0,
                complement: FRAC_PI_2,
            };
        }
        let (ls, lc) = self.log_sin_cos(r);
        Angle::from_sin_cos(ls.exp(), lc.exp())
    }

    /// `ln k`, fixed by `theta'(inf) = pi/2`: `k = 1 / ((p - 1) I(inf))`.
    fn log_k(&self) -> f64 {
        -(self.p - 1.0).ln() - self.log_total
    }

    /// Right-hand side of the ODE at `r`.
    fn slope(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let p = self.p;
        let (ls, lc) = self.log_sin_cos(r);
        (self.log_k() + p * r.ln() - 0.5 * r * r - lc - (p - 2.0) * ls).exp()
    }
}

/// `ln int_0^r t^p exp(-t^2/2) dt` for small `r` via
/// `sum_k (-1/2)^k r^(p+1+2k) / (k! (p+1+2k))`.
fn log_series_head(p: f64, r: f64) -> f64 {
    let r2 = r * r;
    let mut sum = 0.0;
    let mut coef = 1.0;
    for k in 0..8 {
        let kf = k as f64;
        sum += coef / (p + 1.0 + 2.0 * kf);
        coef *= -0.5 * r2 / (kf + 1.0);
    }
    (p + 1.0) * r.ln() + sum.ln()
}

/// Leading asymptotic of `int_r^inf t^p exp(-t^2/2) dt` for `r^2 >> p`.
fn log_asymptotic_tail(p: f64, r: f64) -> f64 {
    let r2 = r * r;
    let corr = 1.0 + (p - 1.0) / r2 + (p - 1.0) * (p - 3.0) / (r2 * r2);
    (p - 1.0) * r.ln() - 0.5 * r2 + corr.ln()
}

#[derive(Debug, Clone)]
enum ThetaCurve {
    Asymptotic { p: f64 },
    Exact(ChiQuadrature),
}

impl ThetaCurve {
    fn angle(&self, r: f64) -> Angle {
        match self {
            ThetaCurve::Asymptotic { p } => asymptotic_angle(r, *p),
            ThetaCurve::Exact(q) => q.angle(r),
        }
    }

    fn slope(&self, r: f64) -> f64 {
        match self {
            ThetaCurve::Asymptotic { p } => asymptotic_slope(r, *p),
            ThetaCurve::Exact(q) => q.slope(r),
        }
    }
}

/// Smallest complement kept in the table; beyond it `theta'` is within a few
/// ulps of `pi/2` and the tabulated angle stops being strictly increasing.
const MIN_TABLE_COMPLEMENT: f64 = 1e-12;

/// Tabulated `theta'(r)` with its numerical inverse `r'(theta)`.
#[derive(Debug, Clone)]
pub struct HypersphericalMap {
    p: usize,
    mode: ThetaMode,
    curve: ThetaCurve,
    grid_r: Vec<f64>,
    grid_theta: Vec<f64>,
    forward_table: MonotoneCubic,
    r_lo: f64,
    theta_at_zero: f64,
}

impl HypersphericalMap {
    /// Tabulate `theta'` on `grid_size` points over `[r_lo, sqrt(p) + 8]`.
    ///
    /// `r_lo` is 0 except for the asymptotic curve at small `p`, where the
    /// closed form is negative near the origin and the domain starts at its
    /// root. The exact curve is cross-checked against a quadrature with cells
    /// half the size; a disagreement above `tol` is reported as an error.
    pub fn build(
        p: usize,
        mode: ThetaMode,
        grid_size: usize,
        tol: f64,
    ) -> Result<Self, TransitionError> {
        if p < 3 {
            return Err(TransitionError::InvalidDimension(p));
        }
        if grid_size < 256 {
            return Err(TransitionError::Config(format!(
                "grid_size {grid_size} below the minimum of 256"
            )));
        }
        if !(tol > 0.0) {
            return Err(TransitionError::Config(format!("tolerance {tol} must be positive")));
        }
        let pf = p as f64;
        let curve = match mode {
            ThetaMode::Asymptotic => ThetaCurve::Asymptotic { p: pf },
            ThetaMode::ExactQuadrature => ThetaCurve::Exact(ChiQuadrature::new(pf, 1.0)),
        };

        let r_lo = match mode {
            ThetaMode::ExactQuadrature => 0.0,
            ThetaMode::Asymptotic => {
                if curve.angle(0.0).theta >= 0.0 {
                    0.0
                } else {
                    bisect(0.0, pf.sqrt(), |r| curve.angle(r).theta >= 0.0)
                }
            }
        };
        let nominal_hi = pf.sqrt() + 8.0;
        let r_hi = if curve.angle(nominal_hi).complement >= MIN_TABLE_COMPLEMENT {
            nominal_hi
        } else {
            bisect(r_lo, nominal_hi, |r| {
                curve.angle(r).complement < MIN_TABLE_COMPLEMENT
            })
        };

        let step = (r_hi - r_lo) / (grid_size - 1) as f64;
        let grid_r: Vec<f64> = (0..grid_size).map(|i| r_lo + step * i as f64).collect();
        let grid_theta: Vec<f64> = grid_r.iter().map(|&r| curve.angle(r).theta.max(0.0)).collect();

        if let Some(i) = (1..grid_size).find(|&i| !(grid_theta[i] > grid_theta[i - 1])) {
            return Err(TransitionError::Numerical(format!(
                "theta' table not strictly increasing at r={} (p={p}, {})",
                grid_r[i],
                mode.name()
            )));
        }
        if grid_theta.iter().any(|&t| !(0.0..FRAC_PI_2).contains(&t)) {
            return Err(TransitionError::Numerical(format!(
                "theta' table leaves [0, pi/2) (p={p}, {})",
                mode.name()
            )));
        }

        if let ThetaCurve::Exact(q) = &curve {
            let fine = ChiQuadrature::new(pf, 0.5);
            let worst = grid_r
                .iter()
                .map(|&r| (q.angle(r).theta - fine.angle(r).theta).abs())
                .fold(0.0, f64::max);
            if !(worst <= tol) {
                return Err(TransitionError::Numerical(format!(
                    "quadrature for p={p} not converged: refined cells move theta' by {worst:e} > {tol:e}"
                )));
            }
            if grid_theta[0] > 1e-6 {
                return Err(TransitionError::Numerical(format!(
                    "theta'(0) = {} violates the boundary condition",
                    grid_theta[0]
                )));
            }
        }

        let grid_slope: Vec<f64> = grid_r.iter().map(|&r| curve.slope(r)).collect();
        let forward_table = MonotoneCubic::with_slopes(grid_r.clone(), grid_theta.clone(), grid_slope)
            .expect("grid is strictly increasing");
        let theta_at_zero = grid_theta[0];
        Ok(Self {
            p,
            mode,
            curve,
            grid_r,
            grid_theta,
            forward_table,
            r_lo,
            theta_at_zero,
        })
    }

    /// Default table: 2048 points, quadrature tolerance 1e-10.
    pub fn new(p: usize, mode: ThetaMode) -> Result<Self, TransitionError> {
        Self::build(p, mode, 2048, 1e-10)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mode(&self) -> ThetaMode {
        self.mode
    }

    pub fn grid_r(&self) -> &[f64] {
        &self.grid_r
    }

    pub fn grid_theta(&self) -> &[f64] {
        &self.grid_theta
    }

    /// Lowest angle in the range of `theta'`; `r'` is undefined below it.
    pub fn theta_at_zero(&self) -> f64 {
        self.theta_at_zero
    }

    /// Lowest speed in the domain of `theta'`.
    pub fn r_lo(&self) -> f64 {
        self.r_lo
    }

    /// `ln k` of the exact curve; `None` for the asymptotic one, whose
    /// constants are folded into the closed form.
    pub fn log_k(&self) -> Option<f64> {
        match &self.curve {
            ThetaCurve::Exact(q) => Some(q.log_k()),
            ThetaCurve::Asymptotic { .. } => None,
        }
    }

    /// Speed range over which `theta'` is numerically invertible: from `r_lo`
    /// up to where `pi/2 - theta'` falls to `1e-8`.
    pub fn effective_domain(&self) -> (f64, f64) {
        let top = *self.grid_r.last().unwrap();
        let hi = if self.curve.angle(top).complement >= 1e-8 {
            top
        } else {
            bisect(self.r_lo, top, |r| self.curve.angle(r).complement < 1e-8)
        };
        (self.r_lo, hi)
    }

    /// `theta'(r)` with its complement.
    pub fn angle(&self, r: f64) -> Result<Angle, TransitionError> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(TransitionError::OutOfRange(format!("speed {r}")));
        }
        if r < self.r_lo {
            return Err(TransitionError::RadiusBelowDomain { r, r_lo: self.r_lo });
        }
        Ok(self.curve.angle(r))
    }

    pub fn theta_prime(&self, r: f64) -> Result<f64, TransitionError> {
        self.angle(r).map(|a| a.theta)
    }

    /// `d theta'/dr`.
    pub fn dtheta_dr(&self, r: f64) -> Result<f64, TransitionError> {
        self.angle(r)?;
        Ok(self.curve.slope(r))
    }

    /// Table lookup through the monotone cubic interpolant (no refinement).
    pub fn interpolated_r(&self, theta: f64) -> Option<f64> {
        self.forward_table.invert(theta)
    }

    /// Table value of `theta'` at `r` by monotone cubic interpolation.
    pub fn interpolated_theta(&self, r: f64) -> Option<f64> {
        self.forward_table.eval(r)
    }

    /// `r'(theta)`, the inverse of `theta'`.
    ///
    /// The table brackets the root and seeds it; safeguarded Newton steps on
    /// the underlying curve then refine it to rounding level.
    pub fn r_prime(&self, theta: f64) -> Result<f64, TransitionError> {
        if theta.is_nan() || theta >= FRAC_PI_2 {
            return Err(TransitionError::OutOfRange(format!("angle {theta}")));
        }
        if theta < self.theta_at_zero {
            return Err(TransitionError::InverseUndefined {
                theta,
                theta_at_zero: self.theta_at_zero,
            });
        }
        self.r_prime_complement(theta, FRAC_PI_2 - theta)
    }

    /// `r'` for an angle given together with its complement.
    pub fn r_prime_of(&self, angle: Angle) -> Result<f64, TransitionError> {
        if angle.theta.is_nan() || !(angle.complement > 0.0) {
            return Err(TransitionError::OutOfRange(format!("angle {}", angle.theta)));
        }
        if angle.theta < self.theta_at_zero {
            return Err(TransitionError::InverseUndefined {
                theta: angle.theta,
                theta_at_zero: self.theta_at_zero,
            });
        }
        self.r_prime_complement(angle.theta, angle.complement)
    }

    fn r_prime_complement(&self, theta: f64, complement: f64) -> Result<f64, TransitionError> {
        let n = self.grid_theta.len();
        // Residual with a sign that increases in r; measured on whichever side
        // of pi/4 carries more precision.
        let use_complement = theta > FRAC_PI_4;
        let residual = |r: f64| {
            let a = self.curve.angle(r);
            if use_complement {
                complement - a.complement
            } else {
                a.theta - theta
            }
        };

        let (mut lo, mut hi, mut r) = if theta <= self.grid_theta[n - 1] {
            let j = self.grid_theta.partition_point(|&t| t <= theta).clamp(1, n - 1) - 1;
            let guess = self
                .forward_table
                .invert(theta)
                .unwrap_or(0.5 * (self.grid_r[j] + self.grid_r[j + 1]));
            (self.grid_r[j], self.grid_r[j + 1], guess)
        } else {
            let mut lo = self.grid_r[n - 1];
            let mut hi = lo + 1.0;
            let mut width = 1.0;
            while residual(hi) < 0.0 {
                lo = hi;
                width *= 2.0;
                hi += width;
                if width > 1e6 {
                    return Err(TransitionError::OutOfRange(format!("angle {theta}")));
                }
            }
            (lo, hi, 0.5 * (lo + hi))
        };

        if self.r_lo == 0.0 && lo == 0.0 && theta == 0.0 {
            return Ok(0.0);
        }

        for _ in 0..200 {
            let f = residual(r);
            if f == 0.0 {
                break;
            }
            if f < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let slope = self.curve.slope(r);
            let newton = r - f / slope;
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - r).abs() <= 2.0 * f64::EPSILON * r.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
                r = next;
                break;
            }
            r = next;
        }

        let achieved = self.curve.angle(r).theta;
        if (achieved - theta).abs() > 1e-10 {
            return Err(TransitionError::Numerical(format!(
                "r'({theta}) refinement stalled at r={r} (theta'(r)={achieved})"
            )));
        }
        Ok(r)
    }

    /// Write the table as CSV `r,theta_prime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,theta_prime")?;
        for (r, t) in self.grid_r.iter().zip(&self.grid_theta) {
            writeln!(w, "{r},{t}")?;
        }
        Ok(())
    }

    /// Deterministic transition on the switching half-space `v . g <= 0`.
    pub fn map_velocity(&self, v: &[f64], g: &[f64]) -> Result<Vec<f64>, TransitionError> {
        let plane = PlaneDecomposition::new(v, g)?;
        if plane.along > 0.0 {
            return Err(TransitionError::ContractViolation {
                dot: plane.along * plane.g_norm,
            });
        }
        if v.len() != self.p {
            return Err(TransitionError::DimensionMismatch {
                expected: self.p,
                got: v.len(),
            });
        }
        // Incoming angle against -g, in [0, pi/2].
        let incoming = Angle::from_sin_cos(plane.across, -plane.along);
        let outgoing = self.angle(plane.r)?;
        let speed = self.r_prime_of(incoming)?;
        let (c, s) = (speed * outgoing.cos(), speed * outgoing.sin());
        Ok(plane
            .u_g
            .iter()
            .zip(&plane.u_perp)
            .map(|(a, b)| c * a + s * b)
            .collect())
    }
}

/// Smallest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred` is false
/// then true.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

    /// Closed form of the exact curve through the regularized incomplete
    /// gamma function: `sin^(p-1) theta'(r) = P((p+1)/2, r^2/2)`. Independent
    /// of the quadrature path.
    fn oracle_theta(r: f64, p: usize) -> f64 {
        let a = (p as f64 + 1.0) / 2.0;
        let x = r * r / 2.0;
        let upper = gamma_ur(a, x);
        let m = p as f64 - 1.0;
        let sin = (log_lower_gamma(a, x) / m).exp();
        let cos = if upper < 0.5 {
            (-((2.0 / m) * (-upper).ln_1p()).exp_m1()).sqrt()
        } else {
            (1.0 - sin * sin).sqrt()
        };
        sin.atan2(cos)
    }

    /// `ln P(a, x)`. Below the mode the power series
    /// `x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))` avoids the
    /// underflow of `P` itself.
    fn log_lower_gamma(a: f64, x: f64) -> f64 {
        if x >= a {
            return gamma_lr(a, x).ln();
        }
        let (mut term, mut sum) = (1.0, 1.0);
        for n in 1..1000 {
            term *= x / (a + n as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        a * x.ln() - x - ln_gamma(a + 1.0) + sum.ln()
    }

    #[test]
    fn quadrature_total_matches_gamma_function() {
        for p in [3usize, 5, 10, 100, 400, 2000] {
            let q = ChiQuadrature::new(p as f64, 1.0);
            let pf = p as f64;
            let expected = 0.5 * (pf - 1.0) * LN_2 + ln_gamma(0.5 * (pf + 1.0));
            assert!(
                (q.log_total - expected).abs() < 1e-12 * expected.abs().max(1.0),
                "p={p}: {} vs {expected}",
                q.log_total
            );
        }
    }

    #[test]
    fn exact_curve_matches_incomplete_gamma_oracle() {
        for p in [3usize, 5, 25, 100, 400] {
            let map = HypersphericalMap::new(p, ThetaMode::ExactQuadrature).unwrap();
            let top = (p as f64).sqrt() + 6.0;
            for k in 1..200 {
                let r = top * k as f64 / 200.0;
                let got = map.theta_prime(r).unwrap();
                let want = oracle_theta(r, p);
                assert!((got - want).abs() < 1e-9, "p={p} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn log_k_underflows_double_precision_for_moderate_p() {
        let map = HypersphericalMap::new(400, ThetaMode::ExactQuadrature).unwrap();
        let log_k = map.log_k().unwrap();
        assert!(log_k < f64::MIN_POSITIVE.ln(), "ln k = {log_k}");
        assert!(log_k.exp() == 0.0);
    }

    #[test]
    fn asymptotic_spot_values() {
        // pi/2 - sqrt(8 ln 2 / 98) / 2, evaluated at 50 digits.
        let at_mode = theta_prime_asymptotic(10.0, 100);
        assert!((at_mode - 1.451_859_953_772_368_4).abs() < 1e-12, "{at_mode}");
        let at_zero = theta_prime_asymptotic(0.0, 100);
        assert!((at_zero - 0.116_927_201_748_434_96).abs() < 1e-9, "{at_zero}");
        assert!(theta_prime_asymptotic(100.0, 100) > FRAC_PI_2 - 1e-3);
        assert!(theta_prime_asymptotic(100.0, 100) <= FRAC_PI_2);
    }

    #[test]
    fn asymptotic_is_monotone_and_bounded() {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=2000 {
            let r = k as f64 * 0.01;
            let t = theta_prime_asymptotic(r, 100);
            assert!(t >= prev && t <= FRAC_PI_2);
            prev = t;
        }
    }

    #[test]
    fn tables_are_strictly_increasing_in_range() {
        for mode in [ThetaMode::Asymptotic, ThetaMode::ExactQuadrature] {
            for p in [3usize, 10, 25, 100, 400] {
                let map = HypersphericalMap::build(p, mode, 256, 1e-8).unwrap();
                let th = map.grid_theta();
                assert!(th.windows(2).all(|w| w[1] > w[0]), "p={p} {mode:?}");
                assert!(th.iter().all(|t| (0.0..FRAC_PI_2).contains(t)));
                if mode == ThetaMode::ExactQuadrature {
                    assert!(th[0] <= 1e-6);
                    assert_eq!(map.r_lo(), 0.0);
                }
            }
        }
    }

    #[test]
    fn small_p_asymptotic_domain_starts_at_its_root() {
        let map = HypersphericalMap::new(3, ThetaMode::Asymptotic).unwrap();
        assert!(map.r_lo() > 0.0);
        assert!(theta_prime_asymptotic(map.r_lo(), 3).abs() < 1e-9);
        assert!(matches!(
            map.theta_prime(0.5 * map.r_lo()),
            Err(TransitionError::RadiusBelowDomain { .. })
        ));
    }

    #[test]
    fn grid_refinement_is_self_consistent() {
        let tol = 1e-6;
        let coarse = HypersphericalMap::build(3, ThetaMode::ExactQuadrature, 256, tol).unwrap();
        let fine = HypersphericalMap::build(3, ThetaMode::ExactQuadrature, 512, tol).unwrap();
        let worst = fine
            .grid_r()
            .iter()
            .zip(fine.grid_theta())
            .map(|(&r, &t)| (coarse.interpolated_theta(r).unwrap() - t).abs())
            .fold(0.0, f64::max);
        assert!(worst <= tol, "sup difference {worst}");
    }

    #[test]
    fn build_rejects_bad_arguments() {
        assert!(matches!(
            HypersphericalMap::build(2, ThetaMode::ExactQuadrature, 256, 1e-8),
            Err(TransitionError::InvalidDimension(2))
        ));
        assert!(HypersphericalMap::build(10, ThetaMode::ExactQuadrature, 100, 1e-8).is_err());
        assert!(HypersphericalMap::build(10, ThetaMode::ExactQuadrature, 256, 0.0).is_err());
    }

    #[test]
    fn r_prime_inverts_theta_prime() {
        for mode in [ThetaMode::Asymptotic, ThetaMode::ExactQuadrature] {
            let map = HypersphericalMap::new(100, mode).unwrap();
            for r in [1.0, 5.0, 10.0] {
                let t = map.theta_prime(r).unwrap();
                let back = map.r_prime(t).unwrap();
                assert!((back - r).abs() < 1e-8, "{mode:?} r={r}: {back}");
            }
        }
    }

    #[test]
    fn r_prime_spot_value_and_errors() {
        let map = HypersphericalMap::new(100, ThetaMode::Asymptotic).unwrap();
        let r = map.r_prime(1.451_856).unwrap();
        assert!((r - 10.0).abs() < 1e-4, "{r}");
        let r = map.r_prime(theta_prime_asymptotic(10.0, 100)).unwrap();
        assert!((r - 10.0).abs() < 1e-6, "{r}");
        assert!(matches!(
            map.r_prime(map.theta_at_zero() / 2.0),
            Err(TransitionError::InverseUndefined { .. })
        ));
        assert!(matches!(map.r_prime(FRAC_PI_2), Err(TransitionError::OutOfRange(_))));
        assert!(map.r_prime(f64::NAN).is_err());
    }

    #[test]
    fn r_prime_residual_is_tiny_everywhere() {
        for mode in [ThetaMode::Asymptotic, ThetaMode::ExactQuadrature] {
            let map = HypersphericalMap::new(25, mode).unwrap();
            let lo = map.theta_at_zero();
            for k in 0..500 {
                let theta = lo + (FRAC_PI_2 - lo) * (k as f64 + 0.5) / 500.0;
                let r = map.r_prime(theta).unwrap();
                assert!((map.theta_prime(r).unwrap() - theta).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        for mode in [ThetaMode::Asymptotic, ThetaMode::ExactQuadrature] {
            let map = HypersphericalMap::new(10, mode).unwrap();
            for r in [2.0, 3.0, 4.0, 6.0] {
                let h = 1e-5;
                let fd = (map.theta_prime(r + h).unwrap() - map.theta_prime(r - h).unwrap()) / (2.0 * h);
                let an = map.dtheta_dr(r).unwrap();
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1e-3), "{mode:?} r={r}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn table_csv_has_header_and_rows() {
        let map = HypersphericalMap::build(5, ThetaMode::ExactQuadrature, 256, 1e-8).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("r,theta_prime"));
        assert_eq!(text.lines().count(), 257);
    }
}
