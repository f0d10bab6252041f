//! Diebold-Mariano test with the Harvey, Leybourne and Newbold small-sample correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::stats::adf::{adf_test, MIN_ADF_LEN};

pub const DM_HORIZON: usize = 1;
pub const ADF_SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ABetter,
    BBetter,
    NoDifference,
    Inapplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// Smaller of the two one-sided p-values.
    pub p_value: f64,
    /// One-sided p-value for "A has lower errors than B".
    pub p_a_better: f64,
    pub p_b_better: f64,
    pub n: usize,
    pub adf_stationary: bool,
    pub verdict: Verdict,
    /// Loss differential with zero variance; p-values are 0 or 1.
    pub degenerate: bool,
}

/// Harvey factor `sqrt((n + 1 - 2h + h(h - 1)/n) / n)`.
pub fn harvey_factor(n: usize, h: usize) -> f64 {
    let (n, h) = (n as f64, h as f64);
    ((n + 1.0 - 2.0 * h + h * (h - 1.0) / n) / n).sqrt()
}

/// Compares error series `a` and `b` (lower is better).
pub fn dm_test(a: &[f64], b: &[f64], significance: f64) -> Result<DmResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "dm: series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < MIN_ADF_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_ADF_LEN,
            got: n,
        });
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidArgument(format!("dm: significance {significance} outside (0, 1)")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma0 = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;

    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gamma0.sqrt() <= 1e-12 * scale || scale == 0.0 {
        let (p_a, p_b, verdict, statistic) = if scale == 0.0 {
            (1.0f64, 1.0f64, Verdict::NoDifference, 0.0)
        } else if mean < 0.0 {
            (0.0, 1.0, Verdict::ABetter, f64::NEG_INFINITY)
        } else {
            (1.0, 0.0, Verdict::BBetter, f64::INFINITY)
        };
        return Ok(DmResult {
            statistic,
            p_value: p_a.min(p_b),
            p_a_better: p_a,
            p_b_better: p_b,
            n,
            adf_stationary: false,
            verdict,
            degenerate: true,
        });
    }

    let statistic = mean / (gamma0 / n as f64).sqrt() * harvey_factor(n, DM_HORIZON);
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_a = t.cdf(statistic);
    let p_b = t.sf(statistic);
    let adf_stationary = match adf_test(&d, ADF_SIGNIFICANCE) {
        Ok(r) => r.stationary,
        Err(_) => false,
    };
    let verdict = if !adf_stationary {
        Verdict::Inapplicable
    } else if p_a < significance {
        Verdict::ABetter
    } else if p_b < significance {
        Verdict::BBetter
    } else {
        Verdict::NoDifference
    };
    Ok(DmResult {
        statistic,
        p_value: p_a.min(p_b),
        p_a_better: p_a,
        p_b_better: p_b,
        n,
        adf_stationary,
        verdict,
        degenerate: false,
    })
}
