//! Ordinary least squares via QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub std_err: DVector<f64>,
    pub rss: f64,
    pub n: usize,
    pub k: usize,
}

impl OlsFit {
    pub fn t_stat(&self, j: usize) -> f64 {
        self.beta[j] / self.std_err[j]
    }

    /// Gaussian AIC up to a constant: `n ln(rss / n) + 2k`.
    pub fn aic(&self) -> f64 {
        self.n as f64 * (self.rss / self.n as f64).ln() + 2.0 * self.k as f64
    }
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n <= k || y.len() != n {
        return Err(Error::InvalidArgument(format!("ols: {n} rows for {k} regressors")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale.max(1e-300)) {
        return Err(Error::InvalidArgument("ols: rank-deficient design".into()));
    }
    let qty = qr.q().tr_mul(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::InvalidArgument("ols: singular R".into()))?;
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - k) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::InvalidArgument("ols: singular R".into()))?;
    // (X'X)^-1 = R^-1 R^-T
    let std_err = DVector::from_iterator(k, (0..k).map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt()));
    Ok(OlsFit {
        beta,
        std_err,
        rss,
        n,
        k,
    })
}
