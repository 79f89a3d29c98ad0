//! Time averages and grids over the exact piecewise-linear path.

use std::io::{self, Write};

use crate::phase::Trajectory;

use super::DiagnosticsError;

/// `int_{t0}^{t1} x(t)^power dt` along one linear piece `x(t0) = x0`,
/// `x' = v`, for `power` 1 or 2.
fn segment_integral(x0: f64, v: f64, len: f64, power: u32) -> f64 {
    match power {
        1 => x0 * len + 0.5 * v * len * len,
        _ => x0 * x0 * len + x0 * v * len * len + v * v * len * len * len / 3.0,
    }
}

/// `(1/T) int_0^T x_c(t)^power dt` over the whole trajectory.
pub fn path_moment(traj: &Trajectory, coord: usize, power: u32) -> Result<f64, DiagnosticsError> {
    path_moment_window(traj, coord, power, traj.start_time(), traj.end_time())
}

/// Time average of `x_c^power` over `[from, to]`.
pub fn path_moment_window(
    traj: &Trajectory,
    coord: usize,
    power: u32,
    from: f64,
    to: f64,
) -> Result<f64, DiagnosticsError> {
    if power != 1 && power != 2 {
        return Err(DiagnosticsError::Config(format!("power {power} not in {{1, 2}}")));
    }
    if !(to > from) {
        return Err(DiagnosticsError::ZeroDuration);
    }
    if from < traj.start_time() || to > traj.end_time() {
        return Err(DiagnosticsError::Config(format!(
            "window [{from}, {to}] outside [{}, {}]",
            traj.start_time(),
            traj.end_time()
        )));
    }
    let col = traj.column_of(coord)?;
    let mut total = 0.0;
    for seg in traj.segments() {
        let (a, b) = (seg.t0.max(from), seg.t1.min(to));
        if b <= a {
            continue;
        }
        let x_a = seg.x0[col] + seg.v[col] * (a - seg.t0);
        total += segment_integral(x_a, seg.v[col], b - a, power);
    }
    Ok(total / (to - from))
}

/// Time averages of `x_c^power` over `batches` equal sub-windows of
/// `[from, to]`.
pub fn batch_means(
    traj: &Trajectory,
    coord: usize,
    power: u32,
    from: f64,
    to: f64,
    batches: usize,
) -> Result<Vec<f64>, DiagnosticsError> {
    if batches == 0 {
        return Err(DiagnosticsError::Config("need at least one batch".into()));
    }
    let width = (to - from) / batches as f64;
    (0..batches)
        .map(|k| {
            let a = from + k as f64 * width;
            let b = if k + 1 == batches { to } else { a + width };
            path_moment_window(traj, coord, power, a, b)
        })
        .collect()
}

/// Mean and standard error of equally weighted batch means.
pub fn mean_and_standard_error(batches: &[f64]) -> (f64, f64) {
    let n = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / n;
    if batches.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Positions sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub coords: Vec<usize>,
    pub times: Vec<f64>,
    /// One row per time, one entry per coordinate.
    pub rows: Vec<Vec<f64>>,
}

impl Discretized {
    /// CSV `t,x_<c>...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for c in &self.coords {
            write!(w, ",x_{c}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            write!(w, "{t}")?;
            for x in row {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `floor(T / dt) + 1` samples at `t_0 + k dt`.
pub fn discretize(traj: &Trajectory, dt: f64, coords: &[usize]) -> Result<Discretized, DiagnosticsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DiagnosticsError::Config(format!("time step {dt} must be positive")));
    }
    let cols = coords
        .iter()
        .map(|&c| traj.column_of(c))
        .collect::<Result<Vec<_>, _>>()?;
    let t0 = traj.start_time();
    let rows_n = (traj.duration() / dt).floor() as usize + 1;
    let mut times = Vec::with_capacity(rows_n);
    let mut rows = Vec::with_capacity(rows_n);
    for k in 0..rows_n {
        let t = (t0 + k as f64 * dt).min(traj.end_time());
        let x = traj.interpolate(t)?;
        times.push(t);
        rows.push(cols.iter().map(|&j| x[j]).collect());
    }
    Ok(Discretized {
        coords: coords.to_vec(),
        times,
        rows,
    })
}
