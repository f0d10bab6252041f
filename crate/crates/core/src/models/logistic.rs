//! L2-regularized logistic regression fitted by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::models::standardize::Standardizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub lambda: f64,
    /// Stop once the gradient max-norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-2,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.tol > 0.0 && self.max_iter > 0) {
            return Err(Error::Config("logistic: need lambda >= 0, tol > 0, max_iter > 0".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Log-loss of a margin `z` against a 0/1 target.
pub fn log_loss(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// Additive smoothing keeps single-class priors strictly inside (0, 1).
pub fn smoothed_prior(y: &[f64]) -> f64 {
    (y.iter().sum::<f64>() + 1.0) / (y.len() as f64 + 2.0)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `mean log-loss + lambda/2 * |w|^2` over parameters `theta = [w; b]`.
pub struct LogisticObjective<'a> {
    /// Design matrix with a trailing column of ones.
    xa: DMatrix<f64>,
    y: &'a [f64],
    lambda: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &DMatrix<f64>, y: &'a [f64], lambda: f64) -> Self {
        let (n, d) = x.shape();
        let mut xa = x.clone().resize_horizontally(d + 1, 1.0);
        if n == 0 {
            xa = DMatrix::zeros(0, d + 1);
        }
        LogisticObjective { xa, y, lambda }
    }

    fn d(&self) -> usize {
        self.xa.ncols() - 1
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * theta.rows(0, self.d()).norm_squared()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = &self.xa * theta;
        let n = self.y.len() as f64;
        z.iter().zip(self.y).map(|(&z, &y)| log_loss(z, y)).sum::<f64>() / n + self.penalty(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let z = &self.xa * theta;
        let n = self.y.len() as f64;
        let r = DVector::from_iterator(z.len(), z.iter().zip(self.y).map(|(&z, &y)| sigmoid(z) - y));
        let mut g = self.xa.tr_mul(&r) / n;
        let d = self.d();
        for j in 0..d {
            g[j] += self.lambda * theta[j];
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let z = &self.xa * theta;
        let n = self.y.len() as f64;
        let mut xs = self.xa.clone();
        for (i, mut row) in xs.row_iter_mut().enumerate() {
            let p = sigmoid(z[i]);
            row *= (p * (1.0 - p)).sqrt();
        }
        let mut h = xs.tr_mul(&xs) / n;
        for j in 0..self.d() {
            h[(j, j)] += self.lambda;
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub standardizer: Standardizer,
    /// Single-class training data: constant prior model.
    pub degenerate: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    fn prior(d: usize, y: &[f64], lambda: f64) -> Self {
        LogisticModel {
            weights: vec![0.0; d],
            bias: logit(smoothed_prior(y)),
            lambda,
            standardizer: Standardizer::identity(d),
            degenerate: true,
            iterations: 0,
            converged: true,
        }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply_row(row);
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

fn class_counts(y: &[f64]) -> (usize, usize) {
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    (y.len() - pos, pos)
}

/// Fits on raw features; non-price columns are standardized with statistics of `x`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], kinds: &[FeatureKind], cfg: &LogisticConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    let (n, d) = x.shape();
    if n != y.len() || kinds.len() != d {
        return Err(Error::InvalidArgument(format!(
            "logistic: {n} rows, {} labels, {d} columns, {} kinds",
            y.len(),
            kinds.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("logistic: non-finite feature".into()));
    }
    let (neg, pos) = class_counts(y);
    if neg < 2 || pos < 2 {
        return Ok(LogisticModel::prior(d, y, cfg.lambda));
    }

    let standardizer = Standardizer::fit(x, kinds);
    let mut xs = x.clone();
    standardizer.apply(&mut xs);
    let obj = LogisticObjective::new(&xs, y, cfg.lambda);

    let mut theta = DVector::zeros(d + 1);
    theta[d] = logit(pos as f64 / n as f64);
    let mut f = obj.value(&theta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it;
        let g = obj.gradient(&theta);
        if g.amax() <= cfg.tol {
            converged = true;
            break;
        }
        let h = obj.hessian(&theta);
        let step = newton_direction(h, &g);
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &theta + &step * t;
            let fc = obj.value(&cand);
            if fc <= f + 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease representable in f64
            converged = obj.gradient(&theta).amax() <= cfg.tol;
            break;
        }
    }
    if !converged {
        tracing::debug!(iterations, "logistic regression stopped before reaching tolerance");
    }
    Ok(LogisticModel {
        weights: theta.rows(0, d).iter().copied().collect(),
        bias: theta[d],
        lambda: cfg.lambda,
        standardizer,
        degenerate: false,
        iterations,
        converged,
    })
}

/// Solves `H s = -g`, adding a ridge when `H` is numerically singular.
fn newton_direction(mut h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut ridge = 0.0;
    let scale = h.diagonal().amax().max(1e-12);
    loop {
        if let Some(ch) = h.clone().cholesky() {
            let s = ch.solve(&(-g));
            if s.iter().all(|v| v.is_finite()) {
                return s;
            }
        }
        let next = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
        for j in 0..h.nrows() {
            h[(j, j)] += next - ridge;
        }
        ridge = next;
        if ridge > 1e6 * scale {
            return -g.clone();
        }
    }
}
