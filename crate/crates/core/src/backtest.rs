//! Walk-forward backtest: weekly test folds, per-period models, prediction records.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::digest_of;
use crate::error::{Error, Result};
use crate::evaluation::pnl_of;
use crate::features::{assemble, count_reasons, AssembleConfig, Assembly, Direction, FeatureSetId, SkipCounts};
use crate::market::{ForecastGrid, MarketDataset, PeriodId, Product, Timestamp, DAY};
use crate::models::{FittedModel, ModelConfig, ModelKind};

pub const WEEK_DAYS: i64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldConfig {
    pub n_folds: usize,
    pub train_days: i64,
    pub buffer_days: i64,
    /// First test day; defaults to the last `n_folds` whole weeks of data.
    pub test_start: Option<Timestamp>,
    /// Folds whose clipped training window is shorter than this are dropped.
    pub min_train_days: i64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            n_folds: 8,
            train_days: 30,
            buffer_days: 1,
            test_start: None,
            min_train_days: 2,
        }
    }
}

impl FoldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds == 0 || self.train_days <= 0 || self.buffer_days < 0 || self.min_train_days <= 0 {
            return Err(Error::Config(format!("invalid fold settings {self:?}")));
        }
        if self.min_train_days > self.train_days {
            return Err(Error::Config("min_train_days exceeds train_days".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_index: usize,
    pub test_start: Timestamp,
    pub test_end: Timestamp,
    pub train_start: Timestamp,
    pub train_end: Timestamp,
}

impl FoldSpec {
    pub fn in_test(&self, t: Timestamp) -> bool {
        self.test_start <= t && t < self.test_end
    }

    pub fn in_train(&self, t: Timestamp) -> bool {
        self.train_start <= t && t < self.train_end
    }
}

/// Consecutive weekly test windows from `test_start`. Training windows are
/// clipped at `data_start`; folds left with less than `min_train_days` of
/// training data are dropped with a warning.
pub fn make_folds(test_start: Timestamp, data_start: Timestamp, cfg: &FoldConfig) -> Result<(Vec<FoldSpec>, Vec<String>)> {
    cfg.validate()?;
    let mut folds = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..cfg.n_folds {
        let start = test_start.add_days(WEEK_DAYS * i as i64);
        let train_end = start.add_days(-cfg.buffer_days);
        let train_start = train_end.add_days(-cfg.train_days).max(data_start);
        if train_end.since(train_start) < cfg.min_train_days * DAY {
            let msg = format!(
                "fold starting {start} dropped: {}s of training data before the buffer",
                train_end.since(train_start).max(0)
            );
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        if train_start != train_end.add_days(-cfg.train_days) {
            warnings.push(format!("fold starting {start}: training window clipped to {train_start}"));
        }
        folds.push(FoldSpec {
            fold_index: folds.len(),
            test_start: start,
            test_end: start.add_days(WEEK_DAYS),
            train_start,
            train_end,
        });
    }
    if folds.is_empty() {
        return Err(Error::SeriesTooShort {
            needed: cfg.min_train_days as usize,
            got: 0,
        });
    }
    Ok((folds, warnings))
}

/// Fold schedule for a set of hourly products: the last `n_folds` weeks
/// ending with the day of the last delivery, unless `test_start` is fixed.
pub fn folds_for_products(products: &[Product], cfg: &FoldConfig) -> Result<(Vec<FoldSpec>, Vec<String>)> {
    let (first, last) = match (products.iter().min(), products.iter().max()) {
        (Some(a), Some(b)) => (a.delivery_start, b.delivery_start),
        _ => return Err(Error::InvalidArgument("no hourly products to backtest".into())),
    };
    let data_start = first.floor_day();
    let data_end = last.floor_day().add_days(1);
    let test_start = cfg
        .test_start
        .unwrap_or_else(|| data_end.add_days(-WEEK_DAYS * cfg.n_folds as i64));
    let test_end = test_start.add_days(WEEK_DAYS * cfg.n_folds as i64);
    if test_end > data_end || test_start < data_start {
        return Err(Error::InvalidArgument(format!(
            "test range [{test_start}, {test_end}) does not fit the data [{data_start}, {data_end})"
        )));
    }
    make_folds(test_start, data_start, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub feature_sets: Vec<FeatureSetId>,
    pub models: Vec<ModelKind>,
    pub periods: Vec<PeriodId>,
    pub folds: FoldConfig,
    pub assemble: AssembleConfig,
    pub model: ModelConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            feature_sets: vec![FeatureSetId::Current],
            models: ModelKind::ALL.to_vec(),
            periods: PeriodId::ALL.to_vec(),
            folds: FoldConfig::default(),
            assemble: AssembleConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_sets.is_empty() || self.models.is_empty() || self.periods.is_empty() {
            return Err(Error::Config("feature_sets, models and periods must be non-empty".into()));
        }
        self.folds.validate()?;
        self.assemble.validate()?;
        self.model.validate()
    }
}

/// One row of `predictions.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fold: usize,
    pub period: PeriodId,
    pub feature_set: FeatureSetId,
    pub model: ModelKind,
    pub product_start: Timestamp,
    pub forecast_time: Timestamp,
    pub label: Direction,
    pub direction: Direction,
    pub signal_strength: f64,
    pub reference_price: f64,
    pub future_price: f64,
    pub pnl: f64,
}

pub const PREDICTIONS_HEADER: [&str; 12] = [
    "fold",
    "period",
    "feature_set",
    "model",
    "product_start",
    "forecast_time",
    "label",
    "direction",
    "signal_strength",
    "reference_price",
    "future_price",
    "pnl",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub fold: usize,
    pub period: PeriodId,
    pub feature_set: FeatureSetId,
    pub model: ModelKind,
    pub n_train: usize,
    /// Grid points of the test window (products x forecast times).
    pub n_test_grid: usize,
    pub n_predictions: usize,
    /// Test grid points without a prediction, by reason (`unlabeled` included).
    pub skips: SkipCounts,
    pub degenerate: bool,
    pub empty_train: bool,
}

impl TaskSummary {
    pub fn n_skipped(&self) -> usize {
        self.skips.values().sum::<u64>() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unavailable {
    pub feature_set: FeatureSetId,
    pub period: PeriodId,
}

#[derive(Clone, Debug)]
pub struct BacktestRun {
    pub config_digest: String,
    pub folds: Vec<FoldSpec>,
    pub predictions: Vec<PredictionRecord>,
    pub tasks: Vec<TaskSummary>,
    pub unavailable: Vec<Unavailable>,
    pub warnings: Vec<String>,
}

/// Builds the samples of every (feature set, period) pair and runs the backtest.
pub fn run(dataset: &MarketDataset, cfg: &BacktestConfig) -> Result<BacktestRun> {
    cfg.validate()?;
    let products: Vec<Product> = dataset.hourly_products().copied().collect();
    let (folds, warnings) = folds_for_products(&products, &cfg.folds)?;
    let range = fold_range(&folds);
    let mut assemblies = Vec::new();
    for &period in &cfg.periods {
        for &fs in &cfg.feature_sets {
            match assemble(dataset, fs, period, Some(range), &cfg.assemble) {
                Ok(a) => assemblies.push(a),
                Err(Error::NotAvailable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let mut out = run_assemblies(&assemblies, &folds, cfg)?;
    out.warnings.splice(0..0, warnings);
    Ok(out)
}

/// Earliest training start and latest test end over `folds`.
pub fn fold_range(folds: &[FoldSpec]) -> (Timestamp, Timestamp) {
    let lo = folds.iter().map(|f| f.train_start).min().unwrap_or_default();
    let hi = folds.iter().map(|f| f.test_end).max().unwrap_or_default();
    (lo, hi)
}

fn grid_points_in(products: &BTreeSet<Product>, grid: &ForecastGrid, period: PeriodId, fold: &FoldSpec) -> usize {
    products
        .iter()
        .flat_map(|p| grid.times(p).map(move |t| (p, t)))
        .filter(|(p, t)| fold.in_test(*t) && crate::market::period_of(*t, p).ok() == Some(period))
        .count()
}

/// Runs every (fold, assembly, model) task on already assembled samples.
/// Requested (feature set, period) pairs without an assembly are reported as
/// unavailable.
pub fn run_assemblies(assemblies: &[Assembly], folds: &[FoldSpec], cfg: &BacktestConfig) -> Result<BacktestRun> {
    cfg.validate()?;
    let mut unavailable = Vec::new();
    for &period in &cfg.periods {
        for &fs in &cfg.feature_sets {
            if !assemblies.iter().any(|a| a.period == period && a.feature_set == fs) {
                unavailable.push(Unavailable {
                    feature_set: fs,
                    period,
                });
            }
        }
    }
    let selected: Vec<&Assembly> = assemblies
        .iter()
        .filter(|a| cfg.periods.contains(&a.period) && cfg.feature_sets.contains(&a.feature_set))
        .collect();
    let mut tasks = Vec::new();
    for fold in folds {
        for a in &selected {
            for &m in &cfg.models {
                tasks.push((fold, *a, m));
            }
        }
    }
    info!(tasks = tasks.len(), folds = folds.len(), "running backtest");

    let results: Vec<(TaskSummary, Vec<PredictionRecord>)> = tasks
        .par_iter()
        .map(|&(fold, a, m)| run_task(fold, a, m, cfg))
        .collect::<Result<_>>()?;

    let mut predictions = Vec::new();
    let mut summaries = Vec::new();
    for (s, p) in results {
        summaries.push(s);
        predictions.extend(p);
    }
    predictions.sort_by(|a, b| {
        (a.fold, a.period, a.feature_set, a.model, a.product_start, a.forecast_time).cmp(&(
            b.fold,
            b.period,
            b.feature_set,
            b.model,
            b.product_start,
            b.forecast_time,
        ))
    });
    let mut warnings = Vec::new();
    for s in &summaries {
        if s.empty_train {
            warnings.push(format!(
                "fold {} {} {} {}: empty training set, prior-only predictions",
                s.fold, s.period, s.feature_set, s.model
            ));
        }
    }
    Ok(BacktestRun {
        config_digest: digest_of(cfg)?,
        folds: folds.to_vec(),
        predictions,
        tasks: summaries,
        unavailable,
        warnings,
    })
}

fn run_task(
    fold: &FoldSpec,
    a: &Assembly,
    model: ModelKind,
    cfg: &BacktestConfig,
) -> Result<(TaskSummary, Vec<PredictionRecord>)> {
    let train: Vec<_> = a
        .samples
        .iter()
        .filter(|s| s.is_labeled() && fold.in_train(s.forecast_time))
        .collect();
    let test: Vec<_> = a.samples.iter().filter(|s| fold.in_test(s.forecast_time)).collect();

    if let (Some(tr), Some(te)) = (
        train.iter().map(|s| s.forecast_time).max(),
        test.iter().map(|s| s.forecast_time).min(),
    ) {
        if tr.add_days(cfg.folds.buffer_days) > te {
            return Err(Error::InvalidArgument(format!(
                "fold {}: training sample at {tr} is within the buffer of test sample at {te}",
                fold.fold_index
            )));
        }
    }

    let fitted = FittedModel::fit(model, &cfg.model, &a.layout, &train)?;
    let mut predictions = Vec::new();
    let mut skips = count_reasons(a.skip_log.iter().filter(|k| fold.in_test(k.forecast_time)));
    let mut unlabeled = 0u64;
    for s in &test {
        let (Some(label), Some(future)) = (s.label, s.future_price) else {
            unlabeled += 1;
            continue;
        };
        let p = fitted.predict(s)?;
        predictions.push(PredictionRecord {
            fold: fold.fold_index,
            period: a.period,
            feature_set: a.feature_set,
            model,
            product_start: s.product.delivery_start,
            forecast_time: s.forecast_time,
            label,
            direction: p.direction,
            signal_strength: p.signal_strength,
            reference_price: s.reference_price,
            future_price: future,
            pnl: pnl_of(p.direction, s.reference_price, future),
        });
    }
    if unlabeled > 0 {
        skips.insert("unlabeled".into(), unlabeled);
    }

    let products: BTreeSet<Product> = a
        .samples
        .iter()
        .map(|s| s.product)
        .chain(a.skip_log.iter().map(|k| k.product))
        .collect();
    let n_test_grid = grid_points_in(&products, &cfg.assemble.grid, a.period, fold);
    let summary = TaskSummary {
        fold: fold.fold_index,
        period: a.period,
        feature_set: a.feature_set,
        model,
        n_train: train.len(),
        n_test_grid,
        n_predictions: predictions.len(),
        skips,
        degenerate: fitted.is_degenerate(),
        empty_train: train.is_empty(),
    };
    if summary.n_predictions + summary.n_skipped() != n_test_grid {
        return Err(Error::InvalidArgument(format!(
            "fold {} {} {}: {} predictions + {} skips != {} grid points",
            fold.fold_index,
            a.period,
            a.feature_set,
            summary.n_predictions,
            summary.n_skipped(),
            n_test_grid
        )));
    }
    Ok((summary, predictions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GeneratorConfig};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    #[test]
    fn paper_year_first_fold() {
        let cfg = FoldConfig {
            n_folds: 52,
            ..FoldConfig::default()
        };
        let (folds, warnings) = make_folds(ts("2024-04-14T00:00:00Z"), ts("2024-01-01T00:00:00Z"), &cfg).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(folds.len(), 52);
        let f = folds[0];
        assert_eq!(f.test_start, ts("2024-04-14T00:00:00Z"));
        assert_eq!(f.test_end, ts("2024-04-21T00:00:00Z"));
        assert_eq!(f.train_start, ts("2024-03-14T00:00:00Z"));
        assert_eq!(f.train_end, ts("2024-04-13T00:00:00Z"));
        assert_eq!(folds[51].test_end, ts("2025-04-13T00:00:00Z"));
    }

    #[test]
    fn folds_partition_test_range() {
        let cfg = FoldConfig {
            n_folds: 2,
            ..FoldConfig::default()
        };
        let start = ts("2024-02-01T00:00:00Z");
        let (folds, _) = make_folds(start, ts("2024-01-01T00:00:00Z"), &cfg).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test_end, folds[1].test_start);
        assert_eq!(folds[0].test_start, start);
        assert_eq!(folds[1].test_end, start.add_days(14));
        for f in &folds {
            assert!(f.train_end.add_days(1) <= f.test_start);
        }
    }

    #[test]
    fn short_history_drops_and_clips() {
        let cfg = FoldConfig {
            n_folds: 3,
            ..FoldConfig::default()
        };
        let data = ts("2024-01-01T00:00:00Z");
        let (folds, warnings) = make_folds(data.add_days(2), data, &cfg).unwrap();
        // first fold has one day of history, below the two-day minimum
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].fold_index, 0);
        assert_eq!(folds[0].train_start, data);
        assert!(warnings[0].contains("dropped"));
        assert!(make_folds(data, data, &FoldConfig { n_folds: 1, ..cfg }).is_err());
    }

    fn small_dataset() -> MarketDataset {
        let g = GeneratorConfig {
            days: 12,
            quarter_hours: false,
            lob: false,
            momentum_rho: 0.5,
            ..GeneratorConfig::default()
        };
        generate(&g).unwrap()
    }

    fn small_config(periods: Vec<PeriodId>) -> BacktestConfig {
        let mut cfg = BacktestConfig {
            periods,
            folds: FoldConfig {
                n_folds: 1,
                ..FoldConfig::default()
            },
            ..BacktestConfig::default()
        };
        cfg.model.gbdt.n_trees = 20;
        cfg
    }

    #[test]
    fn hygiene_and_conservation() {
        let ds = small_dataset();
        let run = run(&ds, &small_config(PeriodId::ALL.to_vec())).unwrap();
        assert_eq!(run.folds.len(), 1);
        assert_eq!(run.tasks.len(), 6);
        for t in &run.tasks {
            assert!(t.n_train > 0 && t.n_predictions > 0);
            assert_eq!(t.n_predictions + t.n_skipped(), t.n_test_grid);
            let n = run
                .predictions
                .iter()
                .filter(|p| p.period == t.period && p.model == t.model && p.fold == t.fold)
                .count();
            assert_eq!(n, t.n_predictions);
        }
        let f = run.folds[0];
        assert!(run.predictions.iter().all(|p| f.in_test(p.forecast_time)));
        for p in &run.predictions {
            assert_eq!(p.pnl, pnl_of(p.direction, p.reference_price, p.future_price));
        }
    }

    #[test]
    fn shuffled_samples_give_identical_predictions() {
        let ds = small_dataset();
        let cfg = small_config(vec![PeriodId::P2to1]);
        let products: Vec<Product> = ds.hourly_products().copied().collect();
        let (folds, _) = folds_for_products(&products, &cfg.folds).unwrap();
        let a = assemble(&ds, FeatureSetId::Current, PeriodId::P2to1, Some(fold_range(&folds)), &cfg.assemble).unwrap();
        let base = run_assemblies(std::slice::from_ref(&a), &folds, &cfg).unwrap();
        let mut shuffled = a.clone();
        shuffled.samples.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let other = run_assemblies(&[shuffled], &folds, &cfg).unwrap();
        assert_eq!(base.predictions, other.predictions);
    }

    #[test]
    fn periods_are_isolated() {
        let ds = small_dataset();
        let both = run(&ds, &small_config(vec![PeriodId::P3to2, PeriodId::P2to1])).unwrap();
        let only = run(&ds, &small_config(vec![PeriodId::P2to1])).unwrap();
        let p2: Vec<_> = both
            .predictions
            .iter()
            .filter(|p| p.period == PeriodId::P2to1)
            .cloned()
            .collect();
        assert!(!p2.is_empty());
        assert_eq!(p2, only.predictions);
    }

    #[test]
    fn unavailable_pairs_are_reported() {
        let ds = small_dataset();
        let mut cfg = small_config(vec![PeriodId::P1toHalf]);
        cfg.feature_sets = vec![FeatureSetId::Current, FeatureSetId::HNeighbor(-1)];
        cfg.models = vec![ModelKind::Logistic];
        let run = run(&ds, &cfg).unwrap();
        assert_eq!(
            run.unavailable,
            vec![Unavailable {
                feature_set: FeatureSetId::HNeighbor(-1),
                period: PeriodId::P1toHalf
            }]
        );
        assert!(run.predictions.iter().all(|p| p.feature_set == FeatureSetId::Current));
    }

    #[test]
    fn empty_training_window_uses_prior() {
        let ds = small_dataset();
        let cfg = small_config(vec![PeriodId::P2to1]);
        let products: Vec<Product> = ds.hourly_products().copied().collect();
        let (mut folds, _) = folds_for_products(&products, &cfg.folds).unwrap();
        // move training far before the data
        folds[0].train_start = ts("2020-01-01T00:00:00Z");
        folds[0].train_end = ts("2020-01-31T00:00:00Z");
        let a = assemble(&ds, FeatureSetId::Current, PeriodId::P2to1, None, &cfg.assemble).unwrap();
        let run = run_assemblies(&[a], &folds, &cfg).unwrap();
        assert!(run.tasks.iter().all(|t| t.empty_train && t.degenerate));
        assert!(run.predictions.iter().all(|p| p.direction == Direction::Down));
        assert!(!run.warnings.is_empty());
    }
}
