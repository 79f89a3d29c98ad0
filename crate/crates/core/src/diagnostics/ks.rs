//! Kolmogorov-Smirnov statistics with asymptotic 1% critical values.

use super::DiagnosticsError;

/// `K` with `P(sqrt(n) D_n > K) = 0.01` asymptotically.
const K_ONE_PERCENT: f64 = 1.63;

/// Smallest sample size for which the asymptotic critical value is used.
pub const MIN_ASYMPTOTIC_N: usize = 1000;

fn sorted(samples: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    if samples.len() < 2 {
        return Err(DiagnosticsError::Data(format!("{} samples; need at least 2", samples.len())));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(DiagnosticsError::Data("NaN sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `sup_x |F_n(x) - F(x)|` against a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64, DiagnosticsError> {
    let s = sorted(samples)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// `sup_x |F_n(x) - G_m(x)|` between two samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, DiagnosticsError> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One-sample 1% critical value `1.63 / sqrt(n)`; `n >= 1000`.
pub fn ks_critical_value_1pct(n: usize) -> Result<f64, DiagnosticsError> {
    if n < MIN_ASYMPTOTIC_N {
        return Err(DiagnosticsError::Config(format!(
            "asymptotic critical value needs n >= {MIN_ASYMPTOTIC_N}, got {n}"
        )));
    }
    Ok(K_ONE_PERCENT / (n as f64).sqrt())
}

/// Two-sample 1% critical value `1.63 sqrt((n + m) / (n m))`.
pub fn ks_two_sample_critical_value_1pct(n: usize, m: usize) -> Result<f64, DiagnosticsError> {
    if n.min(m) < MIN_ASYMPTOTIC_N {
        return Err(DiagnosticsError::Config(format!(
            "asymptotic critical value needs both samples >= {MIN_ASYMPTOTIC_N}"
        )));
    }
    let (n, m) = (n as f64, m as f64);
    Ok(K_ONE_PERCENT * ((n + m) / (n * m)).sqrt())
}
