//! Acceptance criteria. Each test prints one uncaptured
//! `criterion NN <name>: PASS|FAIL (<detail>)` line and fails on FAIL.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use cid_core::backtest::{
    fold_range, folds_for_products, run_assemblies, BacktestConfig, BacktestRun, FoldConfig, PredictionRecord,
};
use cid_core::config::RunConfig;
use cid_core::evaluation::{is_correct, percentile_curves, pnl_of, summarize};
use cid_core::features::{
    assemble, build_label, features_at, last4_price, lag_vwap_vector, lob_features, normalizer, vwap, vwsd,
    AssembleConfig, Assembly, Direction, FeatureSetId, LobMode, LOB_DEPTHS,
};
use cid_core::market::{
    period_of, AreaId, ForecastGrid, ImbalanceRecord, LobSnapshot, MarketDataset, PeriodId, Product, Timestamp,
    Trade, MINUTE,
};
use cid_core::models::{fit_gbdt, fit_pls, GbdtConfig, LogisticObjective, ModelKind, PlsConfig};
use cid_core::pipeline::{self, BacktestInput};
use cid_core::stats::{adf_test, align, dm_test, error_series, Verdict};
use cid_core::synth::{bayes_accuracy_oracle, generate, GeneratorConfig};
use nalgebra::{DMatrix, DVector};
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n:02} {name}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{}", line.trim_end());
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- criterion 1

struct Fixture {
    product: Product,
    /// (exec_time, volume, price), strictly increasing times.
    trades: Vec<(Timestamp, f64, f64)>,
    ds: MarketDataset,
}

fn random_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let s = Timestamp::from_secs(1_717_200_000 + 3600 * rng.random_range(0..48));
    let product = Product::hourly(s).unwrap();
    let n = rng.random_range(0..80);
    let mut secs: Vec<i64> = (0..n).map(|_| rng.random_range(-4 * 3600..-5 * 60)).collect();
    secs.sort_unstable();
    secs.dedup();
    let trades: Vec<(Timestamp, f64, f64)> = secs
        .into_iter()
        .map(|d| {
            let v = (rng.sample::<f64, _>(StandardNormal) * 0.8).exp();
            let p = 50.0 + 15.0 * rng.sample::<f64, _>(StandardNormal);
            (s.add_secs(d), v, p)
        })
        .collect();
    let mut b = MarketDataset::builder();
    let area = b.area("DE");
    for &(t, v, p) in &trades {
        b.add_trade(Trade {
            product,
            exec_time: t,
            volume: v,
            price: p,
            area,
        })
        .unwrap();
    }
    Fixture {
        product,
        trades,
        ds: b.build(),
    }
}

fn brute_vwap(ts: &[(Timestamp, f64, f64)]) -> Option<f64> {
    if ts.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(_, v, p) in ts {
        num += v * p;
        den += v;
    }
    Some(num / den)
}

fn brute_vwsd(ts: &[(Timestamp, f64, f64)]) -> Option<f64> {
    if ts.len() < 2 {
        return None;
    }
    let m = brute_vwap(ts)?;
    let n = ts.len() as f64;
    let vol: f64 = ts.iter().map(|x| x.1).sum();
    let ss: f64 = ts.iter().map(|&(_, v, p)| v * (p - m) * (p - m)).sum();
    Some((ss / ((n - 1.0) / n * vol)).sqrt())
}

fn brute_lags(f: &Fixture, t: Timestamp, h_max: usize, delta: i64) -> Option<Vec<f64>> {
    let asof = t.min(f.product.delivery_start);
    let history: Vec<_> = f.trades.iter().copied().filter(|x| x.0 <= asof).collect();
    if history.is_empty() {
        return None;
    }
    let raw: Vec<Option<f64>> = (0..h_max as i64)
        .map(|h| {
            let hi = asof.add_secs(-h * delta);
            let lo = asof.add_secs(-(h + 1) * delta);
            let w: Vec<_> = f.trades.iter().copied().filter(|x| lo <= x.0 && x.0 <= hi).collect();
            brute_vwap(&w)
        })
        .collect();
    if raw.iter().all(Option::is_none) {
        return Some(vec![brute_vwap(&history)?; h_max]);
    }
    let out = (0..h_max)
        .map(|h| {
            raw[h]
                .or_else(|| (h + 1..h_max).find_map(|k| raw[k]))
                .or_else(|| (0..h).rev().find_map(|k| raw[k]))
                .unwrap()
        })
        .collect();
    Some(out)
}

fn brute_top_rows(levels: &[(f64, f64)], rows: usize) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(p, q) in levels.iter().take(rows) {
        num += p * q;
        den += q;
    }
    (den > 0.0).then(|| num / den)
}

fn brute_top_mw(levels: &[(f64, f64)], mw: f64) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut cum = 0.0;
    for &(p, q) in levels {
        let take = (mw - cum).clamp(0.0, q);
        num += p * take;
        den += take;
        cum += q;
    }
    (den > 0.0).then(|| num / den)
}

fn random_side(rng: &mut ChaCha8Rng, best: f64, dir: f64) -> Vec<(f64, f64)> {
    let n = rng.random_range(0..15);
    let mut price = best;
    (0..n)
        .map(|_| {
            price += dir * rng.random_range(0.01..1.0);
            (price, rng.random_range(0.05..4.0))
        })
        .collect()
}

#[test]
fn criterion_01_formula_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n_fixtures = 1500;
    let mut failures: Vec<String> = Vec::new();
    let mut checks = 0usize;
    let mut fail = |what: &str, i: usize| failures.push(format!("{what}#{i}"));
    for i in 0..n_fixtures {
        let f = random_fixture(&mut rng);
        let s = f.product.delivery_start;
        let t = s.add_secs(rng.random_range(-4 * 3600 - 600..600));
        let past: Vec<_> = f.trades.iter().copied().filter(|x| x.0 <= t).collect();
        let tape_past = f.ds.trades_asof(&f.product, t);

        checks += 1;
        match (vwap(tape_past), brute_vwap(&past)) {
            (Ok(a), Some(b)) if rel_close(a, b, 1e-12) => {}
            (Err(_), None) => {}
            _ => fail("vwap", i),
        }
        checks += 1;
        match (vwsd(tape_past), brute_vwsd(&past)) {
            (Ok(a), Some(b)) if rel_close(a, b, 1e-9) || (a - b).abs() < 1e-9 => {}
            (Err(_), None) => {}
            _ => fail("vwsd", i),
        }
        checks += 1;
        let last4 = brute_vwap(&past[past.len().saturating_sub(4)..]);
        match (last4_price(&f.ds, &f.product, t), last4) {
            (Ok(a), Some(b)) if rel_close(a, b, 1e-12) => {}
            (Err(_), None) => {}
            _ => fail("last4", i),
        }
        checks += 1;
        let h_max = rng.random_range(1..13);
        let delta = [30, 60, 120][rng.random_range(0..3)];
        match (lag_vwap_vector(&f.ds, &f.product, t, h_max, delta), brute_lags(&f, t, h_max, delta)) {
            (Ok(a), Some(b)) if a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| rel_close(*x, *y, 1e-12)) => {}
            (Err(_), None) => {}
            _ => fail("lags", i),
        }
        checks += 1;
        let future: Vec<_> = f
            .trades
            .iter()
            .copied()
            .filter(|x| t < x.0 && x.0 <= t.add_secs(300))
            .collect();
        match (build_label(&f.ds, &f.product, t, 300), last4) {
            (Ok(info), Some(r)) => {
                let fut = brute_vwap(&future);
                let ok_ref = rel_close(info.reference, r, 1e-12);
                let ok_fut = match (info.future, fut) {
                    (Some(a), Some(b)) => rel_close(a, b, 1e-12),
                    (None, None) => true,
                    _ => false,
                };
                let ok_label = info.label == fut.map(|b| if b > r { Direction::Up } else { Direction::Down });
                if !(ok_ref && ok_fut && ok_label) {
                    fail("label", i);
                }
            }
            (Err(_), None) => {}
            _ => fail("label", i),
        }

        checks += 1;
        let mid = 50.0 + rng.random_range(-5.0..5.0);
        let snap = LobSnapshot {
            product: f.product,
            time: t,
            bids: random_side(&mut rng, mid - 0.05, -1.0),
            asks: random_side(&mut rng, mid + 0.05, 1.0),
        };
        let fallback = 47.5;
        for mode in [LobMode::TopRows, LobMode::TopMw] {
            let got = lob_features(&snap, mode, &LOB_DEPTHS, fallback);
            if snap.bids.is_empty() && snap.asks.is_empty() {
                if got.is_ok() {
                    fail("lob-empty", i);
                }
                continue;
            }
            let got = got.unwrap();
            let side = |levels: &[(f64, f64)]| {
                LOB_DEPTHS.map(|d| match mode {
                    LobMode::TopRows => brute_top_rows(levels, d as usize),
                    LobMode::TopMw => brute_top_mw(levels, d),
                }
                .unwrap_or(fallback))
            };
            let (b, a) = (side(&snap.bids), side(&snap.asks));
            let want = [b[0], b[1], b[2], a[0], a[1], a[2]];
            if !got.values.iter().zip(&want).all(|(x, y)| rel_close(*x, *y, 1e-12)) {
                fail("lob", i);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "formula oracles",
        failures.is_empty() && secs < 30.0,
        format!(
            "{n_fixtures} fixtures, {checks} checks, {} mismatches {:?}, {secs:.1}s",
            failures.len(),
            &failures[..failures.len().min(5)]
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_normalization_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut tapes = 0;
    while tapes < 100 {
        let f = random_fixture(&mut rng);
        if f.trades.len() < 2 {
            continue;
        }
        tapes += 1;
        let t = f.product.delivery_start;
        let norm = normalizer(&f.ds, &f.product, t).unwrap();
        let m = brute_vwap(&f.trades).unwrap();
        let sd = brute_vwsd(&f.trades).unwrap();
        worst = worst.max(norm.z(m).abs());
        for k in [-2.0, 1.0, 3.0] {
            worst = worst.max((norm.z(m + k * sd) - k).abs());
        }
    }
    verdict(
        2,
        "normalization identities",
        worst <= 1e-9,
        format!("100 tapes, max |z - k| = {worst:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 3

fn look_ahead_config() -> GeneratorConfig {
    GeneratorConfig {
        seed: 31,
        days: 2,
        quarter_hours: true,
        lob: true,
        ..GeneratorConfig::default()
    }
}

struct Mutation {
    seed: u64,
    price_scale: f64,
    drop_share: f64,
    inserts: usize,
}

/// Rebuilds `ds` with every record stamped after `t` perturbed.
fn mutate_after(ds: &MarketDataset, t: Timestamp, m: &Mutation) -> MarketDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let mut b = MarketDataset::builder();
    for name in ds.areas() {
        b.area(name);
    }
    let products: Vec<Product> = ds.products().copied().collect();
    for p in &products {
        for e in ds.tape(p).entries() {
            let future = e.exec_time > t;
            if future && rng.random::<f64>() < m.drop_share {
                continue;
            }
            b.add_trade(Trade {
                product: *p,
                exec_time: e.exec_time,
                volume: e.volume,
                price: if future { e.price * m.price_scale + 3.0 } else { e.price },
                area: e.area,
            })
            .unwrap();
        }
    }
    for _ in 0..m.inserts {
        let p = products[rng.random_range(0..products.len())];
        let dt = rng.random_range(1..3 * 3600);
        if t.add_secs(dt) >= p.delivery_start {
            continue;
        }
        b.add_trade(Trade {
            product: p,
            exec_time: t.add_secs(dt),
            volume: rng.random_range(0.1..20.0),
            price: rng.random_range(-100.0..400.0),
            area: AreaId(0),
        })
        .unwrap();
    }
    for (_, snaps) in ds.books() {
        for s in snaps {
            let mut s = s.clone();
            if s.time > t {
                s.bids.iter_mut().for_each(|l| l.1 *= 3.0);
                s.asks.truncate(1);
            }
            b.add_snapshot(s).unwrap();
        }
    }
    for f in ds.fundamentals() {
        b.add_fundamental(*f).unwrap();
    }
    for r in ds.imbalances() {
        let mut r: ImbalanceRecord = *r;
        if r.publish_time > t {
            r.saldo_mw = -r.saldo_mw * 5.0 + 777.0;
        }
        b.add_imbalance(r).unwrap();
    }
    b.build()
}

#[test]
fn criterion_03_no_look_ahead() {
    let g = look_ahead_config();
    let ds = generate(&g).unwrap();
    let cfg = AssembleConfig::default();
    // second-day products keep every neighbor inside the data
    let products: Vec<Product> = ds
        .hourly_products()
        .copied()
        .filter(|p| p.delivery_start >= g.start.add_days(1).add_secs(3 * 3600))
        .filter(|p| p.delivery_start <= g.start.add_days(2).add_secs(-3 * 3600))
        .collect();
    let grid: Vec<i64> = (0..146).collect();
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 200,
            failure_persistence: None,
            ..PropConfig::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let compared = std::cell::Cell::new(0usize);
    let strategy = (
        0..products.len(),
        0..grid.len(),
        0u64..u64::MAX,
        0.5..2.0f64,
        0.0..0.9f64,
        0usize..200,
    );
    let result = runner.run(&strategy, |(pi, gi, seed, price_scale, drop_share, inserts)| {
        let p = products[pi];
        let t = p.delivery_start.add_minutes(-180 + grid[gi]);
        let m = Mutation {
            seed,
            price_scale,
            drop_share,
            inserts,
        };
        let mutated = mutate_after(&ds, t, &m);
        for fs in FeatureSetId::ALL {
            let before = features_at(&ds, &p, t, fs, &cfg);
            let after = features_at(&mutated, &p, t, fs, &cfg);
            match (&before, &after) {
                (Ok(a), Ok(b)) if a == b => compared.set(compared.get() + 1),
                (Err(a), Err(b)) if a.to_string() == b.to_string() => {}
                _ => {
                    return Err(TestCaseError::fail(format!(
                        "{fs} at {t} for {p}: {before:?} vs {after:?}"
                    )))
                }
            }
        }
        Ok(())
    });
    verdict(
        3,
        "no look-ahead",
        result.is_ok() && compared.get() > 0,
        match &result {
            Ok(()) => format!("200 mutations, {} feature vectors unchanged", compared.get()),
            Err(e) => format!("{e}"),
        },
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_schedule_partition() {
    let g = GeneratorConfig {
        days: 3,
        quarter_hours: false,
        lob: false,
        ..GeneratorConfig::default()
    };
    let ds = generate(&g).unwrap();
    let cfg = AssembleConfig::default();
    let grid = ForecastGrid::default();
    let mut bad = Vec::new();
    let mut n_products = 0;
    for p in ds.hourly_products() {
        n_products += 1;
        let times: Vec<Timestamp> = grid.times(p).collect();
        let mut counts: BTreeMap<PeriodId, usize> = BTreeMap::new();
        for &t in &times {
            *counts.entry(period_of(t, p).unwrap()).or_default() += 1;
            let lead = p.delivery_start.since(t);
            let label_end = t.add_secs(cfg.horizon_secs);
            if lead > 180 * MINUTE || p.delivery_start.since(label_end) < 30 * MINUTE {
                bad.push(format!("{p} window at {t}"));
            }
        }
        let split = [
            counts.get(&PeriodId::P3to2).copied().unwrap_or(0),
            counts.get(&PeriodId::P2to1).copied().unwrap_or(0),
            counts.get(&PeriodId::P1toHalf).copied().unwrap_or(0),
        ];
        if times.len() != 146 || split != [60, 60, 26] {
            bad.push(format!("{p}: {} times, split {split:?}", times.len()));
        }
    }
    // the assembled samples plus skips cover the same grid
    let mut covered = 0;
    for period in PeriodId::ALL {
        let a = assemble(&ds, FeatureSetId::Current, period, None, &cfg).unwrap();
        covered += a.samples.len() + a.skip_log.len();
    }
    if covered != 146 * n_products {
        bad.push(format!("assembly covers {covered} of {} grid points", 146 * n_products));
    }
    verdict(
        4,
        "schedule partition",
        bad.is_empty(),
        format!("{n_products} products, 146 = 60/60/26 each, {} violations {:?}", bad.len(), bad.first()),
    );
}

// ---------------------------------------------------- criteria 5, 6, 8, 12

struct SignalRun {
    bayes: f64,
    assemblies: Vec<Assembly>,
    run: BacktestRun,
    cfg: BacktestConfig,
    seconds: f64,
}

fn signal_run() -> &'static SignalRun {
    static RUN: OnceLock<SignalRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let g = GeneratorConfig {
            seed: 7,
            days: 60,
            momentum_rho: 0.6,
            lob_imbalance_signal: 0.0,
            quarter_hours: false,
            lob: false,
            ..GeneratorConfig::default()
        };
        let bayes = bayes_accuracy_oracle(&g, 1_000_000).unwrap();
        let ds = generate(&g).unwrap();
        let cfg = BacktestConfig {
            feature_sets: vec![FeatureSetId::Current],
            models: vec![ModelKind::Logistic],
            periods: PeriodId::ALL.to_vec(),
            folds: FoldConfig {
                n_folds: 8,
                ..FoldConfig::default()
            },
            ..BacktestConfig::default()
        };
        let products: Vec<Product> = ds.hourly_products().copied().collect();
        let (folds, _) = folds_for_products(&products, &cfg.folds).unwrap();
        let range = fold_range(&folds);
        let assemblies: Vec<Assembly> = PeriodId::ALL
            .iter()
            .map(|&p| assemble(&ds, FeatureSetId::Current, p, Some(range), &cfg.assemble).unwrap())
            .collect();
        let run = run_assemblies(&assemblies, &folds, &cfg).unwrap();
        SignalRun {
            bayes,
            assemblies,
            run,
            cfg,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_05_fold_hygiene() {
    let s = signal_run();
    let mut bad = Vec::new();
    for f in &s.run.folds {
        if f.train_end.add_days(s.cfg.folds.buffer_days) > f.test_start {
            bad.push(format!("fold {} buffer", f.fold_index));
        }
        for a in &s.assemblies {
            let max_train = a
                .samples
                .iter()
                .filter(|x| x.is_labeled() && f.in_train(x.forecast_time))
                .map(|x| x.forecast_time)
                .max();
            let min_test = s
                .run
                .predictions
                .iter()
                .filter(|p| p.fold == f.fold_index && p.period == a.period)
                .map(|p| p.forecast_time)
                .min();
            if let (Some(tr), Some(te)) = (max_train, min_test) {
                if tr.add_days(1) > te {
                    bad.push(format!("fold {} {}: train {tr} vs test {te}", f.fold_index, a.period));
                }
            }
            let labeled_test = a
                .samples
                .iter()
                .filter(|x| x.is_labeled() && f.in_test(x.forecast_time))
                .count();
            let task = s
                .run
                .tasks
                .iter()
                .find(|t| t.fold == f.fold_index && t.period == a.period)
                .unwrap();
            let unlabeled = task.skips.get("unlabeled").copied().unwrap_or(0) as usize;
            let feature_skips = task.n_skipped() - unlabeled;
            if task.n_predictions != labeled_test
                || labeled_test + unlabeled + feature_skips != task.n_test_grid
                || task.n_predictions + task.n_skipped() != task.n_test_grid
            {
                bad.push(format!("fold {} {}: conservation {task:?}", f.fold_index, a.period));
            }
        }
    }
    let grid: usize = s.run.tasks.iter().map(|t| t.n_test_grid).sum();
    verdict(
        5,
        "fold hygiene",
        bad.is_empty() && s.run.folds.len() == 8,
        format!(
            "{} folds, {} predictions + {} skips = {grid} grid points, {} violations {:?}",
            s.run.folds.len(),
            s.run.predictions.len(),
            s.run.tasks.iter().map(|t| t.n_skipped()).sum::<usize>(),
            bad.len(),
            bad.first()
        ),
    );
}

#[test]
fn criterion_06_signal_recovery() {
    let s = signal_run();
    let threshold = 0.5 + 0.5 * (s.bayes - 0.5);
    let acc = summarize(&s.run.predictions).accuracy;
    let per_period: Vec<String> = PeriodId::ALL
        .iter()
        .map(|p| {
            let a = summarize(s.run.predictions.iter().filter(|r| r.period == *p)).accuracy;
            format!("{p} {a:.4}")
        })
        .collect();
    verdict(
        6,
        "signal recovery",
        acc >= threshold && s.seconds < 600.0,
        format!(
            "accuracy {acc:.4} vs threshold {threshold:.4} (bayes {:.4}); {}; {:.0}s",
            s.bayes,
            per_period.join(", "),
            s.seconds
        ),
    );
}

#[test]
fn criterion_08_percentile_tendency() {
    let s = signal_run();
    let logistic: Vec<&PredictionRecord> = s
        .run
        .predictions
        .iter()
        .filter(|p| p.model == ModelKind::Logistic)
        .collect();
    let curve = percentile_curves(&logistic).unwrap();
    let top10 = curve[9].summary.accuracy;
    let all = curve[99].summary.accuracy;
    verdict(
        8,
        "percentile tendency",
        top10 >= all + 0.01,
        format!("top-10% accuracy {top10:.4} vs 100% {all:.4}"),
    );
}

#[test]
fn criterion_12_pnl_identity() {
    let s = signal_run();
    let mut bad = 0usize;
    let mut checked = 0usize;
    for p in &s.run.predictions {
        let diff = p.future_price - p.reference_price;
        if (p.pnl.abs() - diff.abs()).abs() > 1e-12 * diff.abs().max(1.0) {
            bad += 1;
        }
        if diff != 0.0 {
            checked += 1;
            if (p.pnl > 0.0) != is_correct(p) {
                bad += 1;
            }
        }
    }
    let t0 = Timestamp::from_secs(1_712_102_400);
    let row = |i: i64, label: Direction, dir: Direction, future: f64| PredictionRecord {
        fold: 0,
        period: PeriodId::P2to1,
        feature_set: FeatureSetId::Current,
        model: ModelKind::Logistic,
        product_start: t0.add_secs(3 * 3600),
        forecast_time: t0.add_minutes(i),
        label,
        direction: dir,
        signal_strength: 0.6,
        reference_price: 100.0,
        future_price: future,
        pnl: pnl_of(dir, 100.0, future),
    };
    use Direction::{Down, Up};
    let worked = [row(0, Up, Up, 101.0), row(1, Down, Down, 98.0), row(2, Up, Down, 110.0)];
    let w = summarize(&worked);
    let example_ok = w.total_pnl == -7.0 && format!("{:.1}", 100.0 * w.accuracy) == "66.7";
    verdict(
        12,
        "pnl identity",
        bad == 0 && checked > 0 && example_ok,
        format!(
            "{checked} predictions with future != reference, {bad} violations; worked example total {} accuracy {:.1}%",
            w.total_pnl,
            100.0 * w.accuracy
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_lob_value() {
    let start = Instant::now();
    let mut seed_lines = Vec::new();
    let mut passing = 0;
    for seed in 0..5u64 {
        let g = GeneratorConfig {
            seed: 100 + seed,
            days: 24,
            momentum_rho: 0.2,
            lob_imbalance_signal: 0.5,
            quarter_hours: false,
            lob: true,
            ..GeneratorConfig::default()
        };
        let ds = generate(&g).unwrap();
        let cfg = BacktestConfig {
            feature_sets: vec![FeatureSetId::Current, FeatureSetId::LobTopMw],
            models: vec![ModelKind::Logistic],
            periods: PeriodId::ALL.to_vec(),
            folds: FoldConfig {
                n_folds: 2,
                ..FoldConfig::default()
            },
            ..BacktestConfig::default()
        };
        let run = cid_core::backtest::run(&ds, &cfg).unwrap();
        drop(ds);
        let mut gains = Vec::new();
        let mut dm_wins = 0;
        for period in PeriodId::ALL {
            let acc = |fs: FeatureSetId| {
                summarize(run.predictions.iter().filter(|p| p.period == period && p.feature_set == fs)).accuracy
            };
            gains.push(acc(FeatureSetId::LobTopMw) - acc(FeatureSetId::Current));
            let a = error_series(&run.predictions, period, FeatureSetId::LobTopMw, ModelKind::Logistic);
            let b = error_series(&run.predictions, period, FeatureSetId::Current, ModelKind::Logistic);
            let (ea, eb) = align(&a, &b);
            if dm_test(&ea, &eb, 0.05).map(|r| r.verdict == Verdict::ABetter).unwrap_or(false) {
                dm_wins += 1;
            }
        }
        let ok = gains.iter().all(|g| *g >= 0.02) && dm_wins >= 2;
        passing += usize::from(ok);
        seed_lines.push(format!(
            "seed {}: gains [{}] dm {dm_wins}/3 {}",
            100 + seed,
            gains.iter().map(|g| format!("{:+.1}pt", 100.0 * g)).collect::<Vec<_>>().join(" "),
            if ok { "ok" } else { "miss" }
        ));
    }
    verdict(
        7,
        "lob value",
        passing >= 4,
        format!("{passing}/5 seeds; {}; {:.0}s", seed_lines.join("; "), start.elapsed().as_secs_f64()),
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_model_numerics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut notes = Vec::new();

    // logistic gradient vs central differences
    let (n, d) = (120, 6);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    let obj = LogisticObjective::new(&x, &y, 0.05);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..10 {
        let theta = DVector::from_fn(d + 1, |_, _| rng.random_range(-1.0..1.0));
        let g = obj.gradient(&theta);
        for j in 0..=d {
            let h = 1e-5;
            let mut up = theta.clone();
            up[j] += h;
            let mut dn = theta.clone();
            dn[j] -= h;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
            worst_grad = worst_grad.max((g[j] - fd).abs() / fd.abs().max(1e-8));
        }
    }
    let grad_ok = worst_grad < 1e-5;
    notes.push(format!("logistic grad rel err {worst_grad:.1e}"));

    // GBDT loss never increases
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let yb: Vec<f64> = (0..400)
        .map(|i| f64::from(u8::from(cols[0][i] + 0.5 * cols[1][i] * cols[2][i] + rng.sample::<f64, _>(StandardNormal) > 0.0)))
        .collect();
    let gb = fit_gbdt(&cols, &yb, &GbdtConfig::default()).unwrap();
    let increases = gb.train_loss.windows(2).filter(|w| w[1] > w[0]).count();
    let gbdt_ok = increases == 0 && gb.train_loss.len() > 1;
    notes.push(format!("gbdt {} rounds, {increases} loss increases", gb.train_loss.len() - 1));

    // PLS orthogonality and least-squares reproduction on 50 x 10
    let x = DMatrix::from_fn(50, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
    let yv: Vec<f64> = (0..50)
        .map(|i| (0..10).map(|j| x[(i, j)] * (j as f64 - 4.0)).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let pls = fit_pls(&x, &yv, &PlsConfig::default()).unwrap();
    let t = pls.transform(&x);
    let mut worst_cos: f64 = 0.0;
    for a in 0..t.ncols() {
        for b in a + 1..t.ncols() {
            let (ca, cb) = (t.column(a), t.column(b));
            worst_cos = worst_cos.max(ca.dot(&cb).abs() / (ca.norm() * cb.norm()));
        }
    }
    let ycol = DVector::from_vec(yv);
    let xa = x.clone().insert_column(0, 1.0);
    let direct = &xa * xa.clone().svd(true, true).solve(&ycol, 1e-12).unwrap();
    let ta = t.insert_column(0, 1.0);
    let via_pls = &ta * ta.clone().svd(true, true).solve(&ycol, 1e-12).unwrap();
    let ls_gap = (&direct - &via_pls).amax();
    let pls_ok = worst_cos < 1e-8 && ls_gap < 1e-6 && pls.n_components() == 10;
    notes.push(format!("pls max |cos| {worst_cos:.1e}, fitted-value gap {ls_gap:.1e}"));

    verdict(9, "model numerics", grad_ok && gbdt_ok && pls_ok, notes.join("; "));
}

// ---------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_statistics() {
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    let mut antisym = true;
    for _ in 0..50 {
        let a: Vec<f64> = (0..80).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..80).map(|_| rng.random::<f64>() * 0.95).collect();
        let ab = dm_test(&a, &b, 0.05).unwrap();
        let ba = dm_test(&b, &a, 0.05).unwrap();
        antisym &= ab.statistic == -ba.statistic;
    }
    notes.push(format!("antisymmetry exact: {antisym}"));

    let a: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let identical = dm_test(&a, &a, 0.05).unwrap().verdict == Verdict::NoDifference;
    notes.push(format!("identical -> no_difference: {identical}"));

    let dominated = (0..20u64)
        .filter(|&seed| {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            let good = vec![0.0; 100];
            let bad: Vec<f64> = (0..100).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
            dm_test(&good, &bad, 0.05)
                .map(|res| res.verdict == Verdict::ABetter)
                .unwrap_or(false)
        })
        .count();
    notes.push(format!("dominated pair {dominated}/20"));

    let noise = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..500).map(|_| r.random::<f64>()).collect::<Vec<f64>>()
    };
    let stationary = (0..20u64)
        .filter(|&s| adf_test(&noise(2000 + s), 0.01).unwrap().stationary)
        .count();
    let walks = (0..20u64)
        .filter(|&s| {
            let w: Vec<f64> = noise(3000 + s)
                .iter()
                .scan(0.0, |acc, u| {
                    *acc += u - 0.5;
                    Some(*acc)
                })
                .collect();
            !adf_test(&w, 0.01).unwrap().stationary
        })
        .count();
    notes.push(format!("adf white noise stationary {stationary}/20, random walks non-stationary {walks}/20"));

    verdict(
        10,
        "statistics",
        antisym && identical && dominated >= 19 && stationary >= 18 && walks >= 18,
        notes.join("; "),
    );
}

// ---------------------------------------------------------------- criterion 11

#[test]
fn criterion_11_determinism() {
    let cfg = RunConfig::from_toml_str(
        r#"
seed = 21
[generator]
days = 12
quarter_hours = false
lob = false
[backtest]
feature_sets = ["current", "imbalance"]
periods = ["p3to2", "p2to1", "p1tohalf"]
[backtest.folds]
n_folds = 1
[backtest.model.gbdt]
n_trees = 20
"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run_once = |name: &str, threads: usize| {
        let root = dir.path().join(name);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            pipeline::generate_to(&cfg, &root.join("data")).unwrap();
            pipeline::backtest(&cfg, &BacktestInput::Market(root.join("data")), &root.join("bt")).unwrap();
            pipeline::report(&cfg, &root.join("bt/predictions.csv"), &root.join("report")).unwrap();
        });
        (
            std::fs::read(root.join("bt/predictions.csv")).unwrap(),
            std::fs::read(root.join("report/metrics_overall.csv")).unwrap(),
        )
    };
    let (p1, m1) = run_once("a", 1);
    let (p2, m2) = run_once("b", 3);
    verdict(
        11,
        "determinism",
        p1 == p2 && m1 == m2 && !p1.is_empty(),
        format!(
            "predictions.csv {} bytes identical: {}; metrics_overall.csv identical: {} (1 vs 3 threads)",
            p1.len(),
            p1 == p2,
            m1 == m2
        ),
    );
}

#[test]
fn shuffled_training_rows_do_not_change_predictions() {
    // determinism of fitting with respect to sample order, on the criterion-6 data
    let s = signal_run();
    let mut shuffled: Vec<Assembly> = s.assemblies.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for a in &mut shuffled {
        a.samples.shuffle(&mut rng);
    }
    let cfg = BacktestConfig {
        periods: vec![PeriodId::P1toHalf],
        ..s.cfg.clone()
    };
    let base = run_assemblies(&s.assemblies, &s.run.folds[..2], &cfg).unwrap();
    let other = run_assemblies(&shuffled, &s.run.folds[..2], &cfg).unwrap();
    assert_eq!(base.predictions, other.predictions);
}
