//! Accuracy, PnL, signal-strength curves, weekly series and report files.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::backtest::PredictionRecord;
use crate::error::{Error, Result};
use crate::features::{Direction, FeatureSetId};
use crate::io::write_rows;
use crate::market::{PeriodId, Timestamp};
use crate::models::ModelKind;

/// Price difference earned by a unit position opened at the reference price.
pub fn pnl_of(direction: Direction, reference: f64, future: f64) -> f64 {
    match direction {
        Direction::Up => future - reference,
        Direction::Down => reference - future,
    }
}

pub fn is_correct(r: &PredictionRecord) -> bool {
    r.direction == r.label
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub n_samples: usize,
    pub accuracy: f64,
    pub mean_pnl: f64,
    pub total_pnl: f64,
    /// Mean `|future - reference|` over the same samples.
    pub perfect_foresight_pnl: f64,
}

pub fn summarize<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Summary {
    let (mut n, mut hits, mut pnl, mut pf) = (0usize, 0usize, 0.0, 0.0);
    for r in records {
        n += 1;
        hits += usize::from(is_correct(r));
        pnl += r.pnl;
        pf += (r.future_price - r.reference_price).abs();
    }
    if n == 0 {
        return Summary::default();
    }
    Summary {
        n_samples: n,
        accuracy: hits as f64 / n as f64,
        mean_pnl: pnl / n as f64,
        total_pnl: pnl,
        perfect_foresight_pnl: pf / n as f64,
    }
}

pub type GroupKey = (PeriodId, FeatureSetId, ModelKind);

pub fn group_by_model(records: &[PredictionRecord]) -> BTreeMap<GroupKey, Vec<&PredictionRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.period, r.feature_set, r.model)).or_default().push(r);
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub share_pct: u32,
    pub summary: Summary,
}

/// Metrics over the `ceil(p * n)` strongest signals for p = 1%..100%. Equal
/// strengths are ordered by (product start, forecast time).
pub fn percentile_curves(records: &[&PredictionRecord]) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("percentile curves need at least one prediction".into()));
    }
    let mut sorted: Vec<&PredictionRecord> = records.to_vec();
    sorted.sort_by(|a, b| {
        b.signal_strength
            .total_cmp(&a.signal_strength)
            .then(a.product_start.cmp(&b.product_start))
            .then(a.forecast_time.cmp(&b.forecast_time))
            .then(a.fold.cmp(&b.fold))
    });
    let n = sorted.len();
    // prefix sums keep the 100 cuts linear in n
    let mut hits = vec![0usize; n + 1];
    let mut pnl = vec![0.0; n + 1];
    let mut pf = vec![0.0; n + 1];
    for (i, r) in sorted.iter().enumerate() {
        hits[i + 1] = hits[i] + usize::from(is_correct(r));
        pnl[i + 1] = pnl[i] + r.pnl;
        pf[i + 1] = pf[i] + (r.future_price - r.reference_price).abs();
    }
    Ok((1..=100u32)
        .map(|p| {
            let k = (p as usize * n).div_ceil(100);
            CurvePoint {
                share_pct: p,
                summary: Summary {
                    n_samples: k,
                    accuracy: hits[k] as f64 / k as f64,
                    mean_pnl: pnl[k] / k as f64,
                    total_pnl: pnl[k],
                    perfect_foresight_pnl: pf[k] / k as f64,
                },
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeeklyRow {
    pub period: PeriodId,
    pub feature_set: FeatureSetId,
    pub model: ModelKind,
    pub fold: usize,
    pub week_start: Timestamp,
    pub iso_week: String,
    pub summary: Summary,
}

/// One row per (period, feature set, model, test week). A test week is a fold;
/// it starts on the day of the fold's earliest forecast.
pub fn weekly_series(records: &[PredictionRecord]) -> Vec<WeeklyRow> {
    let mut fold_start: BTreeMap<usize, Timestamp> = BTreeMap::new();
    for r in records {
        let e = fold_start.entry(r.fold).or_insert(r.forecast_time);
        *e = (*e).min(r.forecast_time);
    }
    let mut groups: BTreeMap<(GroupKey, usize), Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(((r.period, r.feature_set, r.model), r.fold)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(((period, feature_set, model), fold), rs)| {
            let week_start = fold_start[&fold].floor_day();
            let w = week_start.to_datetime().iso_week();
            WeeklyRow {
                period,
                feature_set,
                model,
                fold,
                week_start,
                iso_week: format!("{}-W{:02}", w.year(), w.week()),
                summary: summarize(rs),
            }
        })
        .collect()
}

/// Mean `|future - reference|` per period over distinct test samples.
pub fn perfect_foresight_benchmark(records: &[PredictionRecord]) -> BTreeMap<PeriodId, f64> {
    let mut seen: BTreeMap<(PeriodId, Timestamp, Timestamp), f64> = BTreeMap::new();
    for r in records {
        seen.entry((r.period, r.product_start, r.forecast_time))
            .or_insert((r.future_price - r.reference_price).abs());
    }
    let mut acc: BTreeMap<PeriodId, (f64, usize)> = BTreeMap::new();
    for ((period, _, _), d) in seen {
        let e = acc.entry(period).or_default();
        e.0 += d;
        e.1 += 1;
    }
    acc.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect()
}

#[derive(Serialize, Deserialize)]
struct OverallRow {
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
    n_samples: usize,
    accuracy: f64,
    mean_pnl: f64,
    total_pnl: f64,
    perfect_foresight_pnl: f64,
}

#[derive(Serialize)]
struct AccuracyCurveRow {
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
    share_pct: u32,
    n_samples: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct PnlCurveRow {
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
    share_pct: u32,
    n_samples: usize,
    mean_pnl: f64,
    perfect_foresight_pnl: f64,
}

#[derive(Serialize)]
struct WeeklyCsvRow {
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
    fold: usize,
    week_start: Timestamp,
    iso_week: String,
    n_samples: usize,
    accuracy: f64,
    mean_pnl: f64,
}

#[derive(Serialize)]
struct BenchmarkRow {
    period: PeriodId,
    perfect_foresight_pnl: f64,
}

pub const OVERALL_HEADER: [&str; 8] = [
    "period",
    "feature_set",
    "model",
    "n_samples",
    "accuracy",
    "mean_pnl",
    "total_pnl",
    "perfect_foresight_pnl",
];

/// Data-only description of one figure.
#[derive(Serialize)]
struct FigureManifest<'a> {
    figure: &'a str,
    kind: &'a str,
    data: &'a str,
    x: &'a str,
    y: Vec<&'a str>,
    series: Vec<&'a str>,
    title: &'a str,
}

fn write_manifest(dir: &Path, m: &FigureManifest<'_>) -> Result<()> {
    let path = dir.join(format!("{}.json", m.figure));
    std::fs::write(&path, serde_json::to_string_pretty(m)? + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes the report tables and figure manifests into `out`.
pub fn write_report(records: &[PredictionRecord], out: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no predictions to report".into()));
    }
    let groups = group_by_model(records);
    let mut overall = Vec::new();
    let mut acc_rows = Vec::new();
    let mut pnl_rows = Vec::new();
    for (&(period, feature_set, model), rs) in &groups {
        let s = summarize(rs.iter().copied());
        overall.push(OverallRow {
            period,
            feature_set,
            model,
            n_samples: s.n_samples,
            accuracy: s.accuracy,
            mean_pnl: s.mean_pnl,
            total_pnl: s.total_pnl,
            perfect_foresight_pnl: s.perfect_foresight_pnl,
        });
        for c in percentile_curves(rs)? {
            acc_rows.push(AccuracyCurveRow {
                period,
                feature_set,
                model,
                share_pct: c.share_pct,
                n_samples: c.summary.n_samples,
                accuracy: c.summary.accuracy,
            });
            pnl_rows.push(PnlCurveRow {
                period,
                feature_set,
                model,
                share_pct: c.share_pct,
                n_samples: c.summary.n_samples,
                mean_pnl: c.summary.mean_pnl,
                perfect_foresight_pnl: c.summary.perfect_foresight_pnl,
            });
        }
    }
    write_rows(&out.join("metrics_overall.csv"), &OVERALL_HEADER, overall)?;
    write_rows(
        &out.join("curves_accuracy.csv"),
        &["period", "feature_set", "model", "share_pct", "n_samples", "accuracy"],
        acc_rows,
    )?;
    write_rows(
        &out.join("curves_pnl.csv"),
        &[
            "period",
            "feature_set",
            "model",
            "share_pct",
            "n_samples",
            "mean_pnl",
            "perfect_foresight_pnl",
        ],
        pnl_rows,
    )?;
    write_rows(
        &out.join("weekly_accuracy.csv"),
        &[
            "period",
            "feature_set",
            "model",
            "fold",
            "week_start",
            "iso_week",
            "n_samples",
            "accuracy",
            "mean_pnl",
        ],
        weekly_series(records).into_iter().map(|w| WeeklyCsvRow {
            period: w.period,
            feature_set: w.feature_set,
            model: w.model,
            fold: w.fold,
            week_start: w.week_start,
            iso_week: w.iso_week,
            n_samples: w.summary.n_samples,
            accuracy: w.summary.accuracy,
            mean_pnl: w.summary.mean_pnl,
        }),
    )?;
    write_rows(
        &out.join("perfect_foresight.csv"),
        &["period", "perfect_foresight_pnl"],
        perfect_foresight_benchmark(records)
            .into_iter()
            .map(|(period, v)| BenchmarkRow {
                period,
                perfect_foresight_pnl: v,
            }),
    )?;

    let figures = out.join("figures");
    std::fs::create_dir_all(&figures).map_err(|e| Error::io(&figures, e))?;
    let series = vec!["period", "feature_set", "model"];
    write_manifest(
        &figures,
        &FigureManifest {
            figure: "accuracy_curves",
            kind: "line",
            data: "../curves_accuracy.csv",
            x: "share_pct",
            y: vec!["accuracy"],
            series: series.clone(),
            title: "Accuracy over the strongest-signal share of test samples",
        },
    )?;
    write_manifest(
        &figures,
        &FigureManifest {
            figure: "pnl_curves",
            kind: "line",
            data: "../curves_pnl.csv",
            x: "share_pct",
            y: vec!["mean_pnl", "perfect_foresight_pnl"],
            series: series.clone(),
            title: "Mean PnL over the strongest-signal share of test samples",
        },
    )?;
    write_manifest(
        &figures,
        &FigureManifest {
            figure: "weekly_accuracy",
            kind: "line",
            data: "../weekly_accuracy.csv",
            x: "week_start",
            y: vec!["accuracy"],
            series,
            title: "Weekly test accuracy",
        },
    )
}
