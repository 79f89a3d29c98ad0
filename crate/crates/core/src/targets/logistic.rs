//! Bayesian logistic regression with a Gaussian prior `N(0, sigma^2 I)`.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::oracle::GradientOracle;
use crate::rng::{RandomSource, SeededRng};
use crate::vecops::{all_finite, dot};

use super::TargetError;

/// Coefficients used to generate synthetic data; the rest are zero.
pub const TRUE_BETA_HEAD: [f64; 6] = [1.3, 4.0, -1.0, 1.6, 5.0, -2.0];

/// `1 / (1 + e^-z)` without overflow for any finite `z`.
pub fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Covariates (row-major, `n x p`) and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    n: usize,
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl LogisticData {
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self, TargetError> {
        if p == 0 || x.len() != y.len() * p {
            return Err(TargetError::DimensionMismatch {
                expected: y.len() * p,
                got: x.len(),
            });
        }
        if y.is_empty() {
            return Err(TargetError::Data("no observations".into()));
        }
        if !all_finite(&x) {
            return Err(TargetError::Data("non-finite covariate".into()));
        }
        if let Some(i) = y.iter().position(|&yi| yi != 0.0 && yi != 1.0) {
            return Err(TargetError::Data(format!("label {} at row {i} is not 0 or 1", y[i])));
        }
        Ok(Self { n: y.len(), p, x, y })
    }

    /// `x_i ~ N(0, I_p)`, `y_i ~ Bernoulli(sigmoid(x_i . beta))` with
    /// `beta = (1.3, 4, -1, 1.6, 5, -2, 0, ..., 0)`.
    pub fn gen_synthetic(n: usize, p: usize, seed: u64) -> Result<Self, TargetError> {
        if p < 6 {
            return Err(TargetError::Config(format!("dimension {p} below 6")));
        }
        if n == 0 {
            return Err(TargetError::Config("N must be positive".into()));
        }
        let beta = true_beta(p);
        let mut rng = SeededRng::new(seed);
        let mut x = vec![0.0; n * p];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &mut x[i * p..(i + 1) * p];
            rng.fill_std_normal(row);
            y[i] = (rng.uniform() < stable_sigmoid(dot(row, &beta))) as u8 as f64;
        }
        Self::new(p, x, y)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    /// Headerless CSV, label first, then the `p` covariates.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TargetError> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let mut record = Vec::with_capacity(self.p + 1);
        for i in 0..self.n {
            record.clear();
            record.push(format!("{}", self.y[i] as u8));
            record.extend(self.row(i).iter().map(|v| format!("{v}")));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TargetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut p = None;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (k, rec) in reader.records().enumerate() {
            let line = k + 1;
            let rec = rec.map_err(|e| TargetError::Parse { line, msg: e.to_string() })?;
            let cols = rec.len();
            if cols < 2 {
                return Err(TargetError::Parse {
                    line,
                    msg: "need a label and at least one covariate".into(),
                });
            }
            match p {
                None => p = Some(cols - 1),
                Some(p) if p + 1 != cols => {
                    return Err(TargetError::Parse {
                        line,
                        msg: format!("expected {} columns, found {cols}", p + 1),
                    });
                }
                _ => {}
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| TargetError::Parse {
                    line,
                    msg: format!("{s:?}: {e}"),
                })
            };
            let label = parse(&rec[0])?;
            if label != 0.0 && label != 1.0 {
                return Err(TargetError::Parse {
                    line,
                    msg: format!("label {label} is not 0 or 1"),
                });
            }
            y.push(label);
            for field in rec.iter().skip(1) {
                let v = parse(field)?;
                if !v.is_finite() {
                    return Err(TargetError::Parse { line, msg: "non-finite covariate".into() });
                }
                x.push(v);
            }
        }
        let p = p.ok_or_else(|| TargetError::Data("empty dataset".into()))?;
        Self::new(p, x, y)
    }
}

/// Generating coefficients for dimension `p >= 6`.
pub fn true_beta(p: usize) -> Vec<f64> {
    let mut beta = vec![0.0; p];
    beta[..6].copy_from_slice(&TRUE_BETA_HEAD);
    beta
}

/// How [`LogisticPosterior`] answers oracle calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Exact gradient over all `N` rows.
    Full,
    /// Control-variate estimate anchored at `beta_hat`.
    ControlVariate,
    /// Plain `N/n`-scaled minibatch estimate.
    Subsampled,
}

/// Reference point and the full gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub beta_hat: Vec<f64>,
    pub g_ref: Vec<f64>,
}

impl Anchor {
    /// Two-column CSV `beta_hat,g_ref`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TargetError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["beta_hat", "g_ref"])?;
        for (b, g) in self.beta_hat.iter().zip(&self.g_ref) {
            out.write_record([format!("{b}"), format!("{g}")])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TargetError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers().map_err(|e| TargetError::Parse { line: 1, msg: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "beta_hat" || &headers[1] != "g_ref" {
            return Err(TargetError::Parse {
                line: 1,
                msg: "expected header beta_hat,g_ref".into(),
            });
        }
        let (mut beta_hat, mut g_ref) = (Vec::new(), Vec::new());
        for (k, rec) in reader.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| TargetError::Parse { line, msg: e.to_string() })?;
            if rec.len() != 2 {
                return Err(TargetError::Parse { line, msg: "expected 2 columns".into() });
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| TargetError::Parse { line, msg: format!("bad number {s:?}") })
            };
            beta_hat.push(parse(&rec[0])?);
            g_ref.push(parse(&rec[1])?);
        }
        if beta_hat.is_empty() {
            return Err(TargetError::Data("empty anchor file".into()));
        }
        Ok(Self { beta_hat, g_ref })
    }
}

/// Posterior over `beta` with an oracle interface.
///
/// Every oracle call counts once whatever the mode; the number of data rows
/// read is tracked separately in [`LogisticPosterior::touches`].
#[derive(Debug, Clone)]
pub struct LogisticPosterior {
    data: Arc<LogisticData>,
    prior_variance: f64,
    anchor: Option<Anchor>,
    batch_size: usize,
    mode: GradientMode,
    rng: SeededRng,
    batch: Vec<usize>,
    calls: u64,
    touches: u64,
}

impl LogisticPosterior {
    /// Full-gradient posterior.
    pub fn new(data: Arc<LogisticData>, prior_variance: f64) -> Result<Self, TargetError> {
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(TargetError::Config(format!(
                "prior variance {prior_variance} must be positive"
            )));
        }
        Ok(Self {
            data,
            prior_variance,
            anchor: None,
            batch_size: 1,
            mode: GradientMode::Full,
            rng: SeededRng::new(0),
            batch: Vec::new(),
            calls: 0,
            touches: 0,
        })
    }

    /// Switch to a minibatch mode with batches of `n` drawn by a generator
    /// seeded with `seed`.
    pub fn with_batches(mut self, mode: GradientMode, n: usize, seed: u64) -> Result<Self, TargetError> {
        if n == 0 || n > self.data.len() {
            return Err(TargetError::Config(format!(
                "batch size {n} outside 1..={}",
                self.data.len()
            )));
        }
        if mode == GradientMode::ControlVariate && self.anchor.is_none() {
            return Err(TargetError::Config("control variate needs an anchor".into()));
        }
        self.mode = mode;
        self.batch_size = n;
        self.rng = SeededRng::new(seed);
        Ok(self)
    }

    pub fn data(&self) -> &LogisticData {
        &self.data
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn anchor(&self) -> Option<&Anchor> {
        self.anchor.as_ref()
    }

    /// Data rows read so far, including the anchor precomputation.
    pub fn touches(&self) -> u64 {
        self.touches
    }

    /// Compute `g_ref` at `beta_hat` with one pass over the data. This is a
    /// precomputation, not an oracle call.
    pub fn set_anchor(&mut self, beta_hat: Vec<f64>) -> Result<&Anchor, TargetError> {
        self.check_dim(&beta_hat)?;
        let mut g_ref = vec![0.0; self.data.dim()];
        self.full_gradient_uncounted(&beta_hat, &mut g_ref);
        self.anchor = Some(Anchor { beta_hat, g_ref });
        Ok(self.anchor.as_ref().unwrap())
    }

    /// Install a previously computed anchor.
    pub fn load_anchor(&mut self, anchor: Anchor) -> Result<(), TargetError> {
        self.check_dim(&anchor.beta_hat)?;
        self.check_dim(&anchor.g_ref)?;
        self.anchor = Some(anchor);
        Ok(())
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), TargetError> {
        if v.len() != self.data.dim() {
            return Err(TargetError::DimensionMismatch {
                expected: self.data.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `ln pi(beta)` up to a constant. Reads every row.
    pub fn log_density(&mut self, beta: &[f64]) -> Result<f64, TargetError> {
        self.check_dim(beta)?;
        let d = &self.data;
        let mut total = -0.5 * dot(beta, beta) / self.prior_variance;
        for i in 0..d.len() {
            let z = dot(d.row(i), beta);
            total += d.label(i) * z - softplus(z);
        }
        self.touches += d.len() as u64;
        Ok(total)
    }

    /// `x_i (y_i - sigmoid(x_i . beta))` accumulated into `out` with weight `w`.
    fn add_row_gradient(&self, i: usize, beta: &[f64], w: f64, out: &mut [f64]) {
        let row = self.data.row(i);
        let r = w * (self.data.label(i) - stable_sigmoid(dot(row, beta)));
        for (o, xi) in out.iter_mut().zip(row) {
            *o += r * xi;
        }
    }

    fn full_gradient_uncounted(&mut self, beta: &[f64], out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(beta) {
            *o = -b / self.prior_variance;
        }
        for i in 0..self.data.len() {
            self.add_row_gradient(i, beta, 1.0, out);
        }
        self.touches += self.data.len() as u64;
    }

    /// `X^T (y - sigmoid(X beta)) - beta / sigma^2`. One oracle call.
    pub fn grad_full(&mut self, beta: &[f64], out: &mut [f64]) -> Result<(), TargetError> {
        self.check_dim(beta)?;
        self.check_dim(out)?;
        self.full_gradient_uncounted(beta, out);
        self.calls += 1;
        Ok(())
    }

    /// Control-variate estimate on an explicit batch. One oracle call.
    ///
    /// `g_ref + (beta_hat - beta) / sigma^2
    ///  + (N/n) sum_B [grad l_i(beta) - grad l_i(beta_hat)]`
    pub fn grad_cv(&mut self, beta: &[f64], batch: &[usize], out: &mut [f64]) -> Result<(), TargetError> {
        self.check_dim(beta)?;
        self.check_dim(out)?;
        let anchor = self
            .anchor
            .take()
            .ok_or_else(|| TargetError::Config("control variate needs an anchor".into()))?;
        let scale = self.data.len() as f64 / batch.len() as f64;
        for (k, o) in out.iter_mut().enumerate() {
            *o = anchor.g_ref[k] + (anchor.beta_hat[k] - beta[k]) / self.prior_variance;
        }
        // Each row contributes (r_i(beta) - r_i(beta_hat)) x_i, which is an
        // exact zero at the anchor, so cv(beta_hat) == g_ref bitwise.
        for &i in batch {
            let row = self.data.row(i);
            let diff = stable_sigmoid(dot(row, &anchor.beta_hat)) - stable_sigmoid(dot(row, beta));
            for (o, xi) in out.iter_mut().zip(row) {
                *o += scale * diff * xi;
            }
        }
        self.anchor = Some(anchor);
        self.touches += batch.len() as u64;
        self.calls += 1;
        Ok(())
    }

    /// Plain subsampled estimate `-beta/sigma^2 + (N/n) sum_B grad l_i(beta)`.
    /// One oracle call.
    pub fn grad_subsampled(&mut self, beta: &[f64], batch: &[usize], out: &mut [f64]) -> Result<(), TargetError> {
        self.check_dim(beta)?;
        self.check_dim(out)?;
        let scale = self.data.len() as f64 / batch.len() as f64;
        for (o, b) in out.iter_mut().zip(beta) {
            *o = -b / self.prior_variance;
        }
        for &i in batch {
            self.add_row_gradient(i, beta, scale, out);
        }
        self.touches += batch.len() as u64;
        self.calls += 1;
        Ok(())
    }

    /// Uniform batch of the configured size, drawn with replacement.
    pub fn draw_batch(&mut self) -> Vec<usize> {
        let n = self.data.len();
        (0..self.batch_size).map(|_| self.rng.index(n)).collect()
    }
}

impl GradientOracle for LogisticPosterior {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn grad_log_density(&mut self, x: &[f64], out: &mut [f64]) {
        let result = match self.mode {
            GradientMode::Full => self.grad_full(x, out),
            GradientMode::ControlVariate | GradientMode::Subsampled => {
                let mut batch = std::mem::take(&mut self.batch);
                batch.clear();
                let n = self.data.len();
                batch.extend((0..self.batch_size).map(|_| self.rng.index(n)));
                let r = if self.mode == GradientMode::ControlVariate {
                    self.grad_cv(x, &batch, out)
                } else {
                    self.grad_subsampled(x, &batch, out)
                };
                self.batch = batch;
                r
            }
        };
        // Dimensions and the anchor are checked at construction.
        result.expect("logistic posterior misconfigured");
    }

    fn is_stochastic(&self) -> bool {
        self.mode != GradientMode::Full
    }

    fn eval_count(&self) -> u64 {
        self.calls
    }
}
