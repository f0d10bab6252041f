//! Per-product error series, ADF pre-test, Diebold-Mariano comparisons.

pub mod adf;
pub mod dm;
pub mod ols;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use adf::{adf_test, critical_value, AdfResult};
pub use dm::{dm_test, DmResult, Verdict};
pub use ols::{ols, OlsFit};

use crate::backtest::PredictionRecord;
use crate::error::{Error, Result};
use crate::evaluation::is_correct;
use crate::features::FeatureSetId;
use crate::io::write_table;
use crate::market::{PeriodId, Timestamp};
use crate::models::ModelKind;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSeries {
    pub period: PeriodId,
    pub feature_set: FeatureSetId,
    pub model: ModelKind,
    /// Delivery starts, strictly increasing.
    pub index: Vec<Timestamp>,
    /// Error rate (1 - accuracy) of each product.
    pub values: Vec<f64>,
}

impl ErrorSeries {
    pub fn label(&self, with_model: bool) -> String {
        if with_model {
            format!("{}/{}", self.feature_set, self.model)
        } else {
            self.feature_set.to_string()
        }
    }
}

pub fn error_series(
    predictions: &[PredictionRecord],
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
) -> ErrorSeries {
    let mut per_product: BTreeMap<Timestamp, (usize, usize)> = BTreeMap::new();
    for p in predictions
        .iter()
        .filter(|p| p.period == period && p.feature_set == feature_set && p.model == model)
    {
        let e = per_product.entry(p.product_start).or_default();
        e.0 += usize::from(!is_correct(p));
        e.1 += 1;
    }
    let (index, values) = per_product
        .into_iter()
        .map(|(t, (wrong, n))| (t, wrong as f64 / n as f64))
        .unzip();
    ErrorSeries {
        period,
        feature_set,
        model,
        index,
        values,
    }
}

/// Every (feature set, model) error series of `period`, in key order.
pub fn all_error_series(predictions: &[PredictionRecord], period: PeriodId) -> Vec<ErrorSeries> {
    let keys: std::collections::BTreeSet<(FeatureSetId, ModelKind)> = predictions
        .iter()
        .filter(|p| p.period == period)
        .map(|p| (p.feature_set, p.model))
        .collect();
    keys.into_iter()
        .map(|(fs, m)| error_series(predictions, period, fs, m))
        .collect()
}

/// Values of `a` and `b` on their common products.
pub fn align(a: &ErrorSeries, b: &ErrorSeries) -> (Vec<f64>, Vec<f64>) {
    let bm: BTreeMap<Timestamp, f64> = b.index.iter().copied().zip(b.values.iter().copied()).collect();
    a.index
        .iter()
        .zip(&a.values)
        .filter_map(|(t, va)| bm.get(t).map(|vb| (*va, *vb)))
        .unzip()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmMatrix {
    pub period: PeriodId,
    pub labels: Vec<String>,
    /// `cells[r][c]` compares row `r` (as A) against column `c` (as B);
    /// `None` on the diagonal and where the test cannot run.
    pub cells: Vec<Vec<Option<DmResult>>>,
}

pub fn pairwise_matrix(series: &[ErrorSeries], significance: f64) -> Result<DmMatrix> {
    let Some(first) = series.first() else {
        return Err(Error::InvalidArgument("pairwise matrix needs at least one series".into()));
    };
    let period = first.period;
    let models: std::collections::BTreeSet<ModelKind> = series.iter().map(|s| s.model).collect();
    let labels = series.iter().map(|s| s.label(models.len() > 1)).collect();
    let k = series.len();
    let cells: Vec<Option<DmResult>> = (0..k * k)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / k, idx % k);
            if r == c {
                return Ok(None);
            }
            let (a, b) = align(&series[r], &series[c]);
            match dm_test(&a, &b, significance) {
                Ok(res) => Ok(Some(res)),
                Err(Error::SeriesTooShort { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(DmMatrix {
        period,
        labels,
        cells: cells.chunks(k).map(<[_]>::to_vec).collect(),
    })
}

#[derive(Serialize)]
struct HeatmapManifest<'a> {
    figure: String,
    kind: &'a str,
    data: String,
    period: PeriodId,
    value: &'a str,
    labels: &'a [String],
    verdicts: Vec<Vec<Option<Verdict>>>,
    statistics: Vec<Vec<Option<f64>>>,
}

/// Writes `dm_matrix_<period>.csv` and `figures/dm_matrix_<period>.json`.
/// Cells hold the one-sided p-value that the row beats the column, `NA`
/// where the test is inapplicable.
pub fn write_matrix(m: &DmMatrix, out: &Path) -> Result<()> {
    let name = format!("dm_matrix_{}", m.period);
    let mut header = vec!["row".to_string()];
    header.extend(m.labels.iter().cloned());
    let rows: Vec<Vec<String>> = m
        .labels
        .iter()
        .zip(&m.cells)
        .enumerate()
        .map(|(r, (label, cells))| {
            let mut row = vec![label.clone()];
            row.extend(cells.iter().enumerate().map(|(c, cell)| match cell {
                _ if r == c => String::new(),
                Some(res) if res.verdict != Verdict::Inapplicable => res.p_a_better.to_string(),
                _ => "NA".to_string(),
            }));
            row
        })
        .collect();
    write_table(&out.join(format!("{name}.csv")), &header, &rows)?;

    let figures = out.join("figures");
    std::fs::create_dir_all(&figures).map_err(|e| Error::io(&figures, e))?;
    let manifest = HeatmapManifest {
        figure: name.clone(),
        kind: "heatmap",
        data: format!("../{name}.csv"),
        period: m.period,
        value: "p_row_better",
        labels: &m.labels,
        verdicts: m
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c.map(|d| d.verdict)).collect())
            .collect(),
        statistics: m
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c.map(|d| d.statistic).filter(|s| s.is_finite())).collect())
            .collect(),
    };
    let path = figures.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
}
