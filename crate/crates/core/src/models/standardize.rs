use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::features::FeatureKind;

/// Per-column affine scaling. Price columns keep `(0, 1)`; non-price columns
/// use the training fold's mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            sd: vec![1.0; d],
        }
    }

    pub fn fit(x: &DMatrix<f64>, kinds: &[FeatureKind]) -> Self {
        let mut s = Standardizer::identity(x.ncols());
        let n = x.nrows() as f64;
        if x.nrows() == 0 {
            return s;
        }
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == FeatureKind::Price {
                continue;
            }
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            s.mean[j] = mean;
            s.sd[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        s
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &mut DMatrix<f64>) {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            if m != 0.0 || s != 1.0 {
                col.apply(|v| *v = (*v - m) / s);
            }
        }
    }
}
