//! End-to-end commands over the on-disk CSV/JSON artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::backtest::{
    fold_range, folds_for_products, run_assemblies, BacktestRun, FoldSpec, PredictionRecord, PREDICTIONS_HEADER,
};
use crate::config::{RunConfig, RunManifest};
use crate::error::{Error, Result};
use crate::evaluation::write_report;
use crate::features::{assemble, count_reasons, Assembly, FeatureSetId, SkipCounts, SkippedSample};
use crate::io::{read_csv, read_dataset, read_samples, samples_file_name, write_dataset, write_rows, write_samples};
use crate::market::{PeriodId, Product, Timestamp};
use crate::models::{FittedModel, ModelKind};
use crate::stats::{all_error_series, pairwise_matrix, write_matrix};
use crate::synth::generate;

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TASKS_FILE: &str = "backtest_tasks.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const SKIPS_HEADER: [&str; 3] = ["product_start", "forecast_time", "reason"];

pub fn skips_file_name(period: PeriodId, feature_set: &str) -> String {
    format!("skips_{period}_{feature_set}.csv")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn generate_to(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let ds = generate(&cfg.generator())?;
    ensure_dir(out)?;
    write_dataset(&ds, out)?;
    info!(trades = ds.trade_count(), out = %out.display(), "dataset written");
    RunManifest::new("generate", cfg, vec![])?.write(out)
}

#[derive(Serialize, Deserialize)]
struct SkipRow {
    product_start: Timestamp,
    forecast_time: Timestamp,
    reason: String,
}

/// Assembles every configured (period, feature set) pair over the whole
/// dataset and writes one samples file and one skip log per pair.
pub fn featurize(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<(PeriodId, FeatureSetId)>> {
    cfg.validate()?;
    let ds = read_dataset(data)?;
    ensure_dir(out)?;
    let mut written = Vec::new();
    for &period in &cfg.backtest.periods {
        for &fs in &cfg.backtest.feature_sets {
            let a = match assemble(&ds, fs, period, None, &cfg.backtest.assemble) {
                Ok(a) => a,
                Err(Error::NotAvailable { .. }) => continue,
                Err(e) => return Err(e),
            };
            let name = fs.to_string();
            write_samples(&out.join(samples_file_name(period, &name)), &a.layout, &a.samples)?;
            write_rows(
                &out.join(skips_file_name(period, &name)),
                &SKIPS_HEADER,
                a.skip_log.iter().map(|k| SkipRow {
                    product_start: k.product.delivery_start,
                    forecast_time: k.forecast_time,
                    reason: k.reason.clone(),
                }),
            )?;
            info!(%period, feature_set = %fs, samples = a.samples.len(), skipped = a.skip_log.len(), "featurized");
            written.push((period, fs));
        }
    }
    RunManifest::new("featurize", cfg, vec![display(data)])?.write(out)?;
    Ok(written)
}

fn load_assembly(dir: &Path, period: PeriodId, fs: FeatureSetId) -> Result<Option<Assembly>> {
    let name = fs.to_string();
    let samples_path = dir.join(samples_file_name(period, &name));
    if !samples_path.exists() {
        return Ok(None);
    }
    let (layout, samples) = read_samples(&samples_path)?;
    if let Some(s) = samples.iter().find(|s| s.period != period) {
        return Err(Error::Schema {
            path: samples_path,
            line: 0,
            message: format!("sample at {} belongs to period {}", s.forecast_time, s.period),
        });
    }
    let skips_path = dir.join(skips_file_name(period, &name));
    require(&skips_path)?;
    let skip_log = read_csv::<SkipRow>(&skips_path, &SKIPS_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(SkippedSample {
                product: Product::hourly(r.product_start)?,
                forecast_time: r.forecast_time,
                reason: r.reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(Assembly {
        feature_set: fs,
        period,
        layout,
        skips: count_reasons(&skip_log),
        samples,
        skip_log,
        flags: SkipCounts::new(),
    }))
}

/// Where `backtest` takes its samples from.
#[derive(Clone, Debug)]
pub enum BacktestInput {
    /// Raw market data directory.
    Market(PathBuf),
    /// Output directory of `featurize`.
    Features(PathBuf),
}

pub fn backtest_in_memory(cfg: &RunConfig, input: &BacktestInput) -> Result<BacktestRun> {
    cfg.validate()?;
    let bt = &cfg.backtest;
    match input {
        BacktestInput::Market(dir) => {
            let ds = read_dataset(dir)?;
            crate::backtest::run(&ds, bt)
        }
        BacktestInput::Features(dir) => {
            require(dir)?;
            let mut assemblies = Vec::new();
            for &period in &bt.periods {
                for &fs in &bt.feature_sets {
                    if let Some(a) = load_assembly(dir, period, fs)? {
                        assemblies.push(a);
                    }
                }
            }
            if assemblies.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "{} holds no samples for the configured periods and feature sets",
                    dir.display()
                )));
            }
            let mut products: Vec<Product> = assemblies
                .iter()
                .flat_map(|a| a.samples.iter().map(|s| s.product).chain(a.skip_log.iter().map(|k| k.product)))
                .collect();
            products.sort();
            products.dedup();
            let (folds, warnings) = folds_for_products(&products, &bt.folds)?;
            let (lo, hi) = fold_range(&folds);
            for a in &mut assemblies {
                a.samples.retain(|s| lo <= s.forecast_time && s.forecast_time < hi);
                a.skip_log.retain(|k| lo <= k.forecast_time && k.forecast_time < hi);
            }
            let mut run = run_assemblies(&assemblies, &folds, bt)?;
            run.warnings.splice(0..0, warnings);
            Ok(run)
        }
    }
}

#[derive(Serialize)]
struct TaskRow {
    fold: usize,
    period: PeriodId,
    feature_set: FeatureSetId,
    model: ModelKind,
    n_train: usize,
    n_test_grid: usize,
    n_predictions: usize,
    n_skipped: usize,
    skip_reasons: String,
    degenerate: bool,
    empty_train: bool,
}

pub fn write_backtest(run: &BacktestRun, cfg: &RunConfig, input: &BacktestInput, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write_rows(&out.join(PREDICTIONS_FILE), &PREDICTIONS_HEADER, &run.predictions)?;
    write_rows(
        &out.join(TASKS_FILE),
        &[
            "fold",
            "period",
            "feature_set",
            "model",
            "n_train",
            "n_test_grid",
            "n_predictions",
            "n_skipped",
            "skip_reasons",
            "degenerate",
            "empty_train",
        ],
        run.tasks.iter().map(|t| TaskRow {
            fold: t.fold,
            period: t.period,
            feature_set: t.feature_set,
            model: t.model,
            n_train: t.n_train,
            n_test_grid: t.n_test_grid,
            n_predictions: t.n_predictions,
            n_skipped: t.n_skipped(),
            skip_reasons: t.skips.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
            degenerate: t.degenerate,
            empty_train: t.empty_train,
        }),
    )?;
    write_rows(
        &out.join(FOLDS_FILE),
        &["fold_index", "test_start", "test_end", "train_start", "train_end"],
        &run.folds,
    )?;
    let source = match input {
        BacktestInput::Market(p) | BacktestInput::Features(p) => display(p),
    };
    let mut manifest = RunManifest::new("backtest", cfg, vec![source])?;
    manifest.warnings = run.warnings.clone();
    manifest.write(out)
}

pub fn backtest(cfg: &RunConfig, input: &BacktestInput, out: &Path) -> Result<BacktestRun> {
    let run = backtest_in_memory(cfg, input)?;
    write_backtest(&run, cfg, input, out)?;
    info!(predictions = run.predictions.len(), out = %out.display(), "backtest written");
    Ok(run)
}

/// Fits one model on every labeled sample of a samples file.
pub fn train(cfg: &RunConfig, samples: &Path, model: ModelKind, out: &Path) -> Result<FittedModel> {
    cfg.validate()?;
    let (layout, samples) = read_samples(samples)?;
    let refs: Vec<_> = samples.iter().collect();
    let fitted = FittedModel::fit(model, &cfg.backtest.model, &layout, &refs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fitted.save(out)?;
    Ok(fitted)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    read_csv(path, &PREDICTIONS_HEADER)
}

pub fn report(cfg: &RunConfig, predictions: &Path, out: &Path) -> Result<()> {
    let records = read_predictions(predictions)?;
    ensure_dir(out)?;
    write_report(&records, out)?;
    RunManifest::new("report", cfg, vec![display(predictions)])?.write(out)
}

pub fn dm_test(cfg: &RunConfig, predictions: &Path, period: PeriodId, significance: f64, out: &Path) -> Result<()> {
    let records = read_predictions(predictions)?;
    let series = all_error_series(&records, period);
    if series.is_empty() {
        return Err(Error::InvalidArgument(format!("no predictions for period {period}")));
    }
    let m = pairwise_matrix(&series, significance)?;
    ensure_dir(out)?;
    write_matrix(&m, out)?;
    RunManifest::new("dm-test", cfg, vec![display(predictions)])?.write(out)
}

/// Folds of a finished run, for callers that only hold the CSV.
pub fn read_folds(path: &Path) -> Result<Vec<FoldSpec>> {
    read_csv(path, &["fold_index", "test_start", "test_end", "train_start", "train_end"])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
seed = 5
[generator]
days = 12
quarter_hours = false
lob = false
[backtest]
periods = ["p2to1"]
[backtest.folds]
n_folds = 1
[backtest.model.gbdt]
n_trees = 10
"#,
        )
        .unwrap()
    }

    #[test]
    fn featurized_and_raw_backtests_agree() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        generate_to(&cfg, &data).unwrap();
        let feats = dir.path().join("features");
        let written = featurize(&cfg, &data, &feats).unwrap();
        assert_eq!(written, vec![(PeriodId::P2to1, FeatureSetId::Current)]);
        let raw = backtest(&cfg, &BacktestInput::Market(data.clone()), &dir.path().join("bt_raw")).unwrap();
        let from_feats = backtest_in_memory(&cfg, &BacktestInput::Features(feats.clone())).unwrap();
        assert_eq!(raw.predictions, from_feats.predictions);
        assert_eq!(raw.tasks, from_feats.tasks);

        let preds = dir.path().join("bt_raw").join(PREDICTIONS_FILE);
        assert_eq!(read_predictions(&preds).unwrap(), raw.predictions);
        report(&cfg, &preds, &dir.path().join("report")).unwrap();
        assert!(dir.path().join("report/metrics_overall.csv").exists());

        let model = dir.path().join("model.json");
        let fitted = train(&cfg, &feats.join("samples_p2to1_current.csv"), ModelKind::Logistic, &model).unwrap();
        assert_eq!(FittedModel::load(&model).unwrap(), fitted);
    }

    #[test]
    fn missing_inputs_name_the_path() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        let err = backtest_in_memory(&cfg, &BacktestInput::Features(missing.clone())).unwrap_err();
        assert_eq!(err.path(), Some(missing.as_path()));
        let err = report(&cfg, &missing.join("predictions.csv"), dir.path()).unwrap_err();
        assert!(err.to_string().contains("predictions.csv"));
    }
}
