//! Single-response partial least squares (NIPALS with deflation).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlsConfig {
    /// Convergence tolerance of the power-iteration fallback.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap below `min(d, n - 1)`; `None` keeps every component.
    pub max_components: Option<usize>,
}

impl Default for PlsConfig {
    fn default() -> Self {
        PlsConfig {
            tol: 1e-8,
            max_iter: 500,
            max_components: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlsTransform {
    pub x_means: Vec<f64>,
    pub y_mean: f64,
    /// One vector per component, each of length `d`.
    pub weights: Vec<Vec<f64>>,
    pub loadings: Vec<Vec<f64>>,
    /// Projection `W (P'W)^-1`, one column per component.
    pub rotations: Vec<Vec<f64>>,
    pub y_loadings: Vec<f64>,
    /// No variance in X: the transform maps onto an empty space.
    pub degenerate: bool,
}

impl PlsTransform {
    pub fn n_components(&self) -> usize {
        self.rotations.len()
    }

    pub fn n_features(&self) -> usize {
        self.x_means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.rotations
            .iter()
            .map(|r| {
                row.iter()
                    .zip(&self.x_means)
                    .zip(r)
                    .map(|((x, m), w)| (x - m) * w)
                    .sum()
            })
            .collect()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.x_means[j]);
        }
        let a = self.n_components();
        let r = DMatrix::from_fn(self.n_features(), a, |j, k| self.rotations[k][j]);
        xc * r
    }

    /// Regression prediction of the response from the scores.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.y_mean
            + self
                .transform_row(row)
                .iter()
                .zip(&self.y_loadings)
                .map(|(t, q)| t * q)
                .sum::<f64>()
    }
}

/// Dominant right singular direction of `x` by power iteration on `x'x`.
fn power_direction(x: &DMatrix<f64>, tol: f64, max_iter: usize) -> DVector<f64> {
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let start = norms
        .iter()
        .enumerate()
        .fold(0, |best, (j, v)| if *v > norms[best] { j } else { best });
    let mut v = DVector::zeros(x.ncols());
    v[start] = 1.0;
    for _ in 0..max_iter {
        let mut next = x.tr_mul(&(x * &v));
        let nn = next.norm();
        if nn == 0.0 {
            break;
        }
        next /= nn;
        let done = (&next - &v).norm() < tol;
        v = next;
        if done {
            break;
        }
    }
    v
}

pub fn fit_pls(x: &DMatrix<f64>, y: &[f64], cfg: &PlsConfig) -> Result<PlsTransform> {
    let (n, d) = x.shape();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "pls: need >= 2 rows and one response per row, got {n} rows and {} responses",
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("pls: non-finite input".into()));
    }
    let x_means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xr = x.clone();
    for (j, mut col) in xr.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_means[j]);
    }
    let mut yr = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let x_norm0 = xr.norm();
    let stop = 1e-10 * x_norm0.max(1.0);
    let mut cap = d.min(n - 1);
    if let Some(m) = cfg.max_components {
        cap = cap.min(m);
    }

    let mut weights = Vec::new();
    let mut loadings = Vec::new();
    let mut y_loadings = Vec::new();
    while weights.len() < cap {
        let x_norm = xr.norm();
        if x_norm < stop {
            break;
        }
        let mut w = xr.tr_mul(&yr);
        if w.norm() <= 1e-12 * x_norm * yr.norm().max(1.0) {
            w = power_direction(&xr, cfg.tol, cfg.max_iter);
        }
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        w /= wn;
        let t = &xr * &w;
        let tt = t.norm_squared();
        if tt <= stop * stop {
            break;
        }
        let p = xr.tr_mul(&t) / tt;
        let q = yr.dot(&t) / tt;
        xr -= &t * p.transpose();
        yr -= &t * q;
        weights.push(w);
        loadings.push(p);
        y_loadings.push(q);
    }

    let a = weights.len();
    let rotations = if a == 0 {
        Vec::new()
    } else {
        let w = DMatrix::from_columns(&weights);
        let p = DMatrix::from_columns(&loadings);
        let pw = p.tr_mul(&w);
        let inv = pw
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("pls: singular P'W".into()))?;
        let r = w * inv;
        r.column_iter().map(|c| c.iter().copied().collect()).collect()
    };
    let to_vecs = |v: Vec<DVector<f64>>| v.into_iter().map(|c| c.iter().copied().collect()).collect();
    Ok(PlsTransform {
        x_means,
        y_mean,
        weights: to_vecs(weights),
        loadings: to_vecs(loadings),
        rotations,
        y_loadings,
        degenerate: a == 0,
    })
}
