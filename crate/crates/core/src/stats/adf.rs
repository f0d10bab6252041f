//! Augmented Dickey-Fuller unit-root test with a constant and no trend.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::ols::ols;

pub const MIN_ADF_LEN: usize = 20;

/// MacKinnon (2010, "Critical values for cointegration tests", Table 4, one
/// variable, constant, no trend) response surface: `b0 + b1/T + b2/T^2 + b3/T^3`.
pub const MACKINNON_CONSTANT: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

pub fn critical_value(significance: f64, n_obs: usize) -> Result<f64> {
    let (_, b) = MACKINNON_CONSTANT
        .iter()
        .find(|(s, _)| (s - significance).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidArgument(format!("adf: no critical value for significance {significance}")))?;
    let t = n_obs as f64;
    Ok(b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

/// Schwert bound on the augmentation order.
pub fn max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdfResult {
    pub stationary: bool,
    pub t_stat: f64,
    pub lag_used: usize,
    pub critical_value: f64,
    pub n_obs: usize,
}

/// Regression of `dy_t` on `1, y_{t-1}, dy_{t-1..t-p}` over `t` in `first..n`.
fn design(y: &[f64], p: usize, first: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = y.len();
    let rows = n - first;
    let dy = |t: usize| y[t] - y[t - 1];
    let x = DMatrix::from_fn(rows, 2 + p, |i, j| {
        let t = first + i;
        match j {
            0 => 1.0,
            1 => y[t - 1],
            _ => dy(t - (j - 1)),
        }
    });
    let target = DVector::from_iterator(rows, (first..n).map(dy));
    (x, target)
}

pub fn adf_test(y: &[f64], significance: f64) -> Result<AdfResult> {
    let n = y.len();
    if n < MIN_ADF_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_ADF_LEN,
            got: n,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("adf: non-finite value".into()));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(Error::InvalidArgument("adf: constant series".into()));
    }
    // keep at least ten residual degrees of freedom in the largest model
    let mut p_max = max_lag(n);
    while p_max > 0 && n - 1 - p_max < 2 + p_max + 10 {
        p_max -= 1;
    }

    // lag selection on a common sample
    let mut best: Option<(f64, usize)> = None;
    for p in 0..=p_max {
        let (x, target) = design(y, p, p_max + 1);
        let Ok(fit) = ols(&x, &target) else { continue };
        if fit.rss <= 0.0 {
            continue;
        }
        let aic = fit.aic();
        if best.is_none_or(|(b, _)| aic < b) {
            best = Some((aic, p));
        }
    }
    let (_, p) = best.ok_or_else(|| Error::InvalidArgument("adf: no estimable regression".into()))?;

    let (x, target) = design(y, p, p + 1);
    let fit = ols(&x, &target)?;
    if fit.rss <= 0.0 || !fit.std_err[1].is_finite() || fit.std_err[1] == 0.0 {
        return Err(Error::InvalidArgument("adf: perfect fit".into()));
    }
    let t_stat = fit.t_stat(1);
    let cv = critical_value(significance, fit.n)?;
    Ok(AdfResult {
        stationary: t_stat < cv,
        t_stat,
        lag_used: p,
        critical_value: cv,
        n_obs: fit.n,
    })
}
