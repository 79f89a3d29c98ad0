//! Stationarity residual of a transition function.
//!
//! A piecewise linear process with transition `F` leaves `pi(x) N(v; 0, I)`
//! invariant when, for every `x` and `v`,
//!
//! ```text
//! lambda(v) pi(v) - lambda(F^-1 v) pi(F^-1 v) |dF^-1/dv| = -(v . g) pi(v)
//! ```
//!
//! with `g = grad ln pi(x)`. Dividing through by `pi(v)` leaves a relation
//! that can be evaluated at single points. The map acts only in the plane of
//! `v` and `g`, so the Jacobian is a 2x2 finite-difference determinant in
//! plane coordinates `(a, b)` (components along `g` and across it) times
//! `(|b'| / |b|)^(p-2)` for the orthogonal directions.

use std::fmt;
use std::io::{self, Write};

use crate::transitions::{Transition, TransitionError};
use crate::vecops::dot;

use super::DiagnosticsError;

/// Uniform `n_r x n_theta` grid of speeds and angles against `+g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
}

impl ResidualGrid {
    fn axis(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        let ok = self.n_r >= 1
            && self.n_theta >= 1
            && self.r_min > 0.0
            && self.r_max >= self.r_min
            && self.theta_min > 0.0
            && self.theta_max >= self.theta_min
            && self.theta_max < std::f64::consts::FRAC_PI_2;
        if ok && self.r_max.is_finite() {
            Ok(())
        } else {
            Err(DiagnosticsError::Config(format!(
                "grid needs 0 < r_min <= r_max and 0 < theta_min <= theta_max < pi/2, got {self:?}"
            )))
        }
    }
}

/// Which half of velocity space a grid point was placed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `v . g > 0`: the state a switch lands in; `lambda(v) = 0`.
    PostSwitch,
    /// `v . g < 0`: the state a switch starts from.
    PreSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub r: f64,
    /// Angle between `v` and `+g`, in `(0, pi)`.
    pub theta: f64,
    pub side: Side,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FPResidualReport {
    pub transition: String,
    pub p: usize,
    pub grid: ResidualGrid,
    pub fd_step: f64,
    pub points: Vec<ResidualPoint>,
    /// Points skipped because the inverse was undefined there or the
    /// finite-difference Jacobian was singular.
    pub flagged: usize,
    pub max_abs_residual: f64,
    pub mean_abs_residual: f64,
    pub worst_point: (f64, f64),
}

impl FPResidualReport {
    /// Per-point CSV `r,theta,residual`.
    pub fn write_points_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,theta,residual")?;
        for pt in &self.points {
            writeln!(w, "{},{},{}", pt.r, pt.theta, pt.residual)?;
        }
        Ok(())
    }
}

impl fmt::Display for FPResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.grid;
        writeln!(f, "transition={}", self.transition)?;
        writeln!(f, "p={}", self.p)?;
        writeln!(f, "r_min={}", g.r_min)?;
        writeln!(f, "r_max={}", g.r_max)?;
        writeln!(f, "n_r={}", g.n_r)?;
        writeln!(f, "theta_min={}", g.theta_min)?;
        writeln!(f, "theta_max={}", g.theta_max)?;
        writeln!(f, "n_theta={}", g.n_theta)?;
        writeln!(f, "fd_step={}", self.fd_step)?;
        writeln!(f, "points={}", self.points.len())?;
        writeln!(f, "flagged={}", self.flagged)?;
        writeln!(f, "max_abs_residual={:e}", self.max_abs_residual)?;
        writeln!(f, "mean_abs_residual={:e}", self.mean_abs_residual)?;
        writeln!(f, "worst_r={}", self.worst_point.0)?;
        writeln!(f, "worst_theta={}", self.worst_point.1)
    }
}

/// Unit vectors of the evaluation plane: `u_g` along the fiducial gradient
/// and `u_perp` orthogonal to it.
fn fiducial_frame(p: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // Standard Gaussian target at x = -(1.5 / sqrt p) (1, ..., 1), so g = -x.
    let s = 1.5 / (p as f64).sqrt();
    let g = vec![s; p];
    let u_g: Vec<f64> = vec![1.0 / (p as f64).sqrt(); p];
    let u_perp = if p == 1 {
        vec![0.0]
    } else {
        // First canonical vector with its u_g component removed.
        let mut e = vec![0.0; p];
        e[0] = 1.0;
        let c = dot(&e, &u_g);
        let mut w: Vec<f64> = e.iter().zip(&u_g).map(|(a, b)| a - c * b).collect();
        let n = dot(&w, &w).sqrt();
        w.iter_mut().for_each(|x| *x /= n);
        w
    };
    (g, u_g, u_perp)
}

enum PointOutcome {
    Residual(f64),
    Flagged,
}

fn evaluate(
    transition: &Transition,
    g: &[f64],
    u_g: &[f64],
    u_perp: &[f64],
    a: f64,
    b: f64,
    h: f64,
) -> Result<PointOutcome, DiagnosticsError> {
    let embed = |a: f64, b: f64| -> Vec<f64> {
        u_g.iter().zip(u_perp).map(|(x, y)| a * x + b * y).collect()
    };
    let plane = |w: &[f64]| (dot(w, u_g), dot(w, u_perp));
    let inverse = |a: f64, b: f64| -> Result<Option<(f64, f64, Vec<f64>)>, DiagnosticsError> {
        match transition.inverse(&embed(a, b), g) {
            Ok(w) => {
                let (a2, b2) = plane(&w);
                Ok(Some((a2, b2, w)))
            }
            Err(e) if e.is_outside_map_domain() => Ok(None),
            Err(TransitionError::OutOfRange(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };

    let v = embed(a, b);
    let Some((_, b_w, w)) = inverse(a, b)? else {
        return Ok(PointOutcome::Flagged);
    };
    let mut cols = [[0.0; 2]; 2];
    for (k, (da, db)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
        let (Some(plus), Some(minus)) = (inverse(a + da, b + db)?, inverse(a - da, b - db)?) else {
            return Ok(PointOutcome::Flagged);
        };
        cols[k] = [(plus.0 - minus.0) / (2.0 * h), (plus.1 - minus.1) / (2.0 * h)];
    }
    let det = cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1];
    if !(det.abs() > 0.0) || !det.is_finite() || b_w == 0.0 {
        return Ok(PointOutcome::Flagged);
    }
    let p = v.len() as f64;
    let log_jac = det.abs().ln() + (p - 2.0) * (b_w.abs().ln() - b.abs().ln());

    let vg = dot(&v, g);
    let lambda_v = (-vg).max(0.0);
    let lambda_w = (-dot(&w, g)).max(0.0);
    let log_ratio = -0.5 * (dot(&w, &w) - dot(&v, &v)) + log_jac;
    let lhs = lambda_v - if lambda_w > 0.0 { lambda_w * log_ratio.exp() } else { 0.0 };
    let rhs = -vg;
    Ok(PointOutcome::Residual((lhs - rhs).abs() / rhs.abs().max(1e-300)))
}

/// Relative stationarity residual on `grid`, at both the post-switch state
/// (angle `theta` against `+g`) and the mirrored pre-switch state (angle
/// `pi - theta`).
pub fn fp_residual(
    transition: &Transition,
    p: usize,
    grid: &ResidualGrid,
    fd_step: f64,
) -> Result<FPResidualReport, DiagnosticsError> {
    grid.validate()?;
    if p < 2 {
        return Err(DiagnosticsError::Config(format!("dimension {p} below 2")));
    }
    if let Transition::Hyperspherical(m) = transition {
        if m.p() != p {
            return Err(DiagnosticsError::Config(format!(
                "map built for p = {} evaluated at p = {p}",
                m.p()
            )));
        }
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(DiagnosticsError::Config(format!("step {fd_step} must be positive")));
    }
    let (g, u_g, u_perp) = fiducial_frame(p);
    let mut points = Vec::with_capacity(2 * grid.n_r * grid.n_theta);
    let mut flagged = 0;
    for r in ResidualGrid::axis(grid.r_min, grid.r_max, grid.n_r) {
        for theta in ResidualGrid::axis(grid.theta_min, grid.theta_max, grid.n_theta) {
            let (a, b) = (r * theta.cos(), r * theta.sin());
            for (side, a, angle) in [
                (Side::PostSwitch, a, theta),
                (Side::PreSwitch, -a, std::f64::consts::PI - theta),
            ] {
                match evaluate(transition, &g, &u_g, &u_perp, a, b, fd_step)? {
                    PointOutcome::Residual(residual) => points.push(ResidualPoint {
                        r,
                        theta: angle,
                        side,
                        residual,
                    }),
                    PointOutcome::Flagged => flagged += 1,
                }
            }
        }
    }
    if points.is_empty() {
        return Err(DiagnosticsError::Config("every grid point was flagged".into()));
    }
    // Fixed iteration order: the first maximum wins ties.
    let worst = points
        .iter()
        .fold(&points[0], |best, pt| if pt.residual > best.residual { pt } else { best });
    let mean = points.iter().map(|pt| pt.residual).sum::<f64>() / points.len() as f64;
    Ok(FPResidualReport {
        transition: transition.name(),
        p,
        grid: *grid,
        fd_step,
        max_abs_residual: worst.residual,
        mean_abs_residual: mean,
        worst_point: (worst.r, worst.theta),
        points,
        flagged,
    })
}
