//! Period-specific sample matrices: one row per (hourly product, forecast minute).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::exogenous::{fundamentals_features, imbalance_feature, FundamentalFeatures, FUNDAMENTAL_NAMES};
use crate::features::label::{build_label, Direction};
use crate::features::lob::{lob_features, LobMode, LOB_DEPTHS};
use crate::features::price::{lag_vwap_vector, last4_price, normalizer, Normalizer};
use crate::market::{period_of, ForecastGrid, MarketDataset, PeriodId, Product, Timestamp, MINUTE};

/// Feature families that can be added on top of the current product's prices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSetId {
    Current,
    Fundamentals,
    /// Hourly neighbor at the given hour offset (-2, -1, +1, +2).
    HNeighbor(i8),
    QhCurrent,
    QhNeighbor(i8),
    Imbalance,
    LobTopRows,
    LobTopMw,
    Selected,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 15] = [
        FeatureSetId::Current,
        FeatureSetId::Fundamentals,
        FeatureSetId::HNeighbor(-1),
        FeatureSetId::HNeighbor(-2),
        FeatureSetId::HNeighbor(1),
        FeatureSetId::HNeighbor(2),
        FeatureSetId::QhCurrent,
        FeatureSetId::QhNeighbor(-1),
        FeatureSetId::QhNeighbor(-2),
        FeatureSetId::QhNeighbor(1),
        FeatureSetId::QhNeighbor(2),
        FeatureSetId::Imbalance,
        FeatureSetId::LobTopRows,
        FeatureSetId::LobTopMw,
        FeatureSetId::Selected,
    ];

    /// Exogenous blocks appended to the current-product block in `period`.
    pub fn blocks(self, period: PeriodId, selected_p2to1_includes_h_plus_2h: bool) -> Result<Vec<Block>> {
        let na = || Error::NotAvailable {
            feature_set: self.to_string(),
            period: period.to_string(),
        };
        let trading = |o: i8| period.hourly_neighbor_offsets().contains(&(o as i64));
        Ok(match self {
            FeatureSetId::Current => vec![],
            FeatureSetId::Fundamentals => vec![Block::Fundamentals],
            FeatureSetId::HNeighbor(o) if trading(o) => vec![Block::Hourly(o)],
            FeatureSetId::QhNeighbor(o) if trading(o) => vec![Block::Qh(o)],
            FeatureSetId::HNeighbor(_) | FeatureSetId::QhNeighbor(_) => return Err(na()),
            FeatureSetId::QhCurrent => vec![Block::QhCurrent],
            FeatureSetId::Imbalance => vec![Block::Imbalance],
            FeatureSetId::LobTopRows => vec![Block::Lob(LobMode::TopRows)],
            FeatureSetId::LobTopMw => vec![Block::Lob(LobMode::TopMw)],
            FeatureSetId::Selected => {
                let lob = [Block::Lob(LobMode::TopRows), Block::Lob(LobMode::TopMw)];
                let mut v = match period {
                    PeriodId::P3to2 => vec![
                        Block::Hourly(-1),
                        Block::Hourly(-2),
                        Block::QhCurrent,
                        Block::Qh(-1),
                        Block::Qh(-2),
                        Block::Qh(1),
                    ],
                    PeriodId::P2to1 => {
                        let mut v = vec![Block::Hourly(-1)];
                        if selected_p2to1_includes_h_plus_2h {
                            v.push(Block::Hourly(2));
                        }
                        v.extend([Block::QhCurrent, Block::Qh(-1), Block::Qh(1)]);
                        v
                    }
                    PeriodId::P1toHalf => vec![Block::QhCurrent, Block::Qh(2)],
                };
                v.extend(lob);
                v
            }
        })
    }
}

fn offset_tag(o: i8) -> String {
    format!("{o:+}h")
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSetId::Current => f.write_str("current"),
            FeatureSetId::Fundamentals => f.write_str("fundamentals"),
            FeatureSetId::HNeighbor(o) => write!(f, "h{}", offset_tag(*o)),
            FeatureSetId::QhCurrent => f.write_str("qh-current"),
            FeatureSetId::QhNeighbor(o) => write!(f, "qh{}", offset_tag(*o)),
            FeatureSetId::Imbalance => f.write_str("imbalance"),
            FeatureSetId::LobTopRows => f.write_str("lob-top-rows"),
            FeatureSetId::LobTopMw => f.write_str("lob-top-mw"),
            FeatureSetId::Selected => f.write_str("selected"),
        }
    }
}

impl FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSetId::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::Unknown(format!("feature set {s:?}")))
    }
}

impl Serialize for FeatureSetId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSetId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// One exogenous block of a feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Fundamentals,
    Hourly(i8),
    QhCurrent,
    Qh(i8),
    Imbalance,
    Lob(LobMode),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Already z-scored against a product's own trade history.
    Price,
    /// Raw physical quantity; standardized by the model layer.
    NonPrice,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub source: String,
    pub lag: usize,
}

impl FeatureDescriptor {
    fn new(name: impl Into<String>, source: impl Into<String>, lag: usize) -> Self {
        FeatureDescriptor {
            name: name.into(),
            source: source.into(),
            lag,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self.source.as_str() {
            "fundamentals" | "imbalance" => FeatureKind::NonPrice,
            _ => FeatureKind::Price,
        }
    }

    /// CSV column name `name:source:lag`.
    pub fn column(&self) -> String {
        format!("{}:{}:{}", self.name, self.source, self.lag)
    }

    pub fn parse_column(col: &str) -> Result<Self> {
        let mut it = col.split(':');
        match (it.next(), it.next(), it.next(), it.next()) {
            (Some(name), Some(source), Some(lag), None) => Ok(FeatureDescriptor::new(
                name,
                source,
                lag.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad lag in feature column {col:?}")))?,
            )),
            _ => Err(Error::InvalidArgument(format!("bad feature column {col:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub descriptors: Vec<FeatureDescriptor>,
}

impl FeatureLayout {
    pub fn build(blocks: &[Block], h_max: usize) -> Self {
        let mut d = vec![FeatureDescriptor::new("last4", "current", 0)];
        let lags = |d: &mut Vec<FeatureDescriptor>, source: &str| {
            d.extend((0..h_max).map(|h| FeatureDescriptor::new("vwap", source, h)));
        };
        lags(&mut d, "current");
        for block in blocks {
            match *block {
                Block::Fundamentals => {
                    d.extend(FUNDAMENTAL_NAMES.iter().map(|n| FeatureDescriptor::new(*n, "fundamentals", 0)))
                }
                Block::Hourly(o) => lags(&mut d, &format!("h{}", offset_tag(o))),
                Block::QhCurrent => {
                    for q in 0..4 {
                        lags(&mut d, &format!("qh-current-q{q}"));
                    }
                }
                Block::Qh(o) => {
                    for q in 0..4 {
                        lags(&mut d, &format!("qh{}-q{q}", offset_tag(o)));
                    }
                }
                Block::Imbalance => d.push(FeatureDescriptor::new("nrv_saldo", "imbalance", 0)),
                Block::Lob(mode) => {
                    for side in ["bid", "ask"] {
                        for depth in LOB_DEPTHS {
                            d.push(FeatureDescriptor::new(
                                format!("lob_{}_{side}_{}", mode.tag(), depth as u32),
                                "current",
                                0,
                            ));
                        }
                    }
                }
            }
        }
        FeatureLayout { descriptors: d }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.descriptors.iter().map(FeatureDescriptor::kind).collect()
    }

    pub fn columns(&self) -> Vec<String> {
        self.descriptors.iter().map(FeatureDescriptor::column).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

/// One rolling-window forecast instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub product: Product,
    pub forecast_time: Timestamp,
    pub period: PeriodId,
    pub features: FeatureVector,
    pub reference_price: f64,
    pub future_price: Option<f64>,
    pub label: Option<Direction>,
    /// Current product's z-score parameters at the forecast time.
    pub normalizer: Normalizer,
}

impl Sample {
    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }

    /// Future price z-scored like the current product's price features.
    pub fn future_z(&self) -> Option<f64> {
        self.future_price.map(|f| self.normalizer.z(f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleConfig {
    pub h_max: usize,
    pub delta_secs: i64,
    pub grid: ForecastGrid,
    pub horizon_secs: i64,
    /// Reading of the ambiguous "Selected" rule for the 2h-1h period.
    pub selected_p2to1_includes_h_plus_2h: bool,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            h_max: 10,
            delta_secs: MINUTE,
            grid: ForecastGrid::default(),
            horizon_secs: 5 * MINUTE,
            selected_p2to1_includes_h_plus_2h: true,
        }
    }
}

impl AssembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.h_max == 0 || self.delta_secs <= 0 || self.horizon_secs <= 0 {
            return Err(Error::Config("h_max, delta and horizon must be positive".into()));
        }
        if self.grid.end_lead_min * MINUTE - self.horizon_secs < 30 * MINUTE {
            return Err(Error::Config(
                "last forecast plus horizon must end at least 30 minutes before delivery".into(),
            ));
        }
        Ok(())
    }
}

/// Why a candidate sample was not emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkipReason {
    NoReference,
    DegenerateNormalization,
    Unavailable(&'static str),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NoReference => f.write_str("no_reference"),
            SkipReason::DegenerateNormalization => f.write_str("degenerate_normalization"),
            SkipReason::Unavailable(what) => write!(f, "unavailable:{what}"),
        }
    }
}

pub type SkipCounts = BTreeMap<String, u64>;

/// A grid point that produced no sample.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SkippedSample {
    pub product: Product,
    pub forecast_time: Timestamp,
    pub reason: String,
}

pub fn merge_counts(into: &mut SkipCounts, from: &SkipCounts) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

#[derive(Clone, Debug)]
pub struct Assembly {
    pub feature_set: FeatureSetId,
    pub period: PeriodId,
    pub layout: Arc<FeatureLayout>,
    pub samples: Vec<Sample>,
    pub skips: SkipCounts,
    /// Every skipped grid point, ordered like `samples`.
    pub skip_log: Vec<SkippedSample>,
    /// Non-fatal substitutions (LOB side fallback, day-ahead for intraday fundamentals).
    pub flags: SkipCounts,
}

impl Assembly {
    pub fn labeled(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.is_labeled())
    }
}

pub fn count_reasons<'a>(skipped: impl IntoIterator<Item = &'a SkippedSample>) -> SkipCounts {
    let mut counts = SkipCounts::new();
    for s in skipped {
        *counts.entry(s.reason.clone()).or_default() += 1;
    }
    counts
}

fn block_name(block: &Block) -> &'static str {
    match block {
        Block::Fundamentals => "fundamentals",
        Block::Hourly(_) => "hourly_neighbor",
        Block::QhCurrent => "qh_current",
        Block::Qh(_) => "qh_neighbor",
        Block::Imbalance => "imbalance",
        Block::Lob(_) => "lob",
    }
}

struct Ctx<'a> {
    dataset: &'a MarketDataset,
    cfg: &'a AssembleConfig,
    blocks: &'a [Block],
    layout: &'a Arc<FeatureLayout>,
    period: PeriodId,
}

fn push_lags(
    ctx: &Ctx<'_>,
    out: &mut Vec<f64>,
    product: &Product,
    t: Timestamp,
    block: &Block,
) -> std::result::Result<(), SkipReason> {
    let unavailable = SkipReason::Unavailable(block_name(block));
    let lags = lag_vwap_vector(ctx.dataset, product, t, ctx.cfg.h_max, ctx.cfg.delta_secs).map_err(|_| unavailable)?;
    let norm = normalizer(ctx.dataset, product, t.min(product.delivery_start)).map_err(|_| unavailable)?;
    out.extend(lags.into_iter().map(|x| norm.z(x)));
    Ok(())
}

fn sample_at(
    ctx: &Ctx<'_>,
    product: &Product,
    t: Timestamp,
    fundamentals: Option<&FundamentalFeatures>,
    flags: &mut SkipCounts,
) -> std::result::Result<Sample, SkipReason> {
    let dataset = ctx.dataset;
    let reference = last4_price(dataset, product, t).map_err(|_| SkipReason::NoReference)?;
    let norm = normalizer(dataset, product, t).map_err(|_| SkipReason::DegenerateNormalization)?;
    let mut values = Vec::with_capacity(ctx.layout.len());
    values.push(norm.z(reference));
    let lags = lag_vwap_vector(dataset, product, t, ctx.cfg.h_max, ctx.cfg.delta_secs)
        .map_err(|_| SkipReason::NoReference)?;
    values.extend(lags.into_iter().map(|x| norm.z(x)));

    for block in ctx.blocks {
        match *block {
            Block::Fundamentals => {
                let f = fundamentals.ok_or(SkipReason::Unavailable("fundamentals"))?;
                values.extend_from_slice(&f.values);
            }
            Block::Hourly(o) => push_lags(ctx, &mut values, &product.shifted_hours(o as i64), t, block)?,
            Block::QhCurrent => {
                for q in product.quarter_hours() {
                    push_lags(ctx, &mut values, &q, t, block)?;
                }
            }
            Block::Qh(o) => {
                for q in product.shifted_hours(o as i64).quarter_hours() {
                    push_lags(ctx, &mut values, &q, t, block)?;
                }
            }
            Block::Imbalance => {
                values.push(imbalance_feature(dataset, t).map_err(|_| SkipReason::Unavailable("imbalance"))?)
            }
            Block::Lob(mode) => {
                let snap = dataset
                    .snapshot_asof(product, t)
                    .ok_or(SkipReason::Unavailable("lob"))?;
                let f = lob_features(snap, mode, &LOB_DEPTHS, reference).map_err(|_| SkipReason::Unavailable("lob"))?;
                if f.bid_fallback || f.ask_fallback {
                    *flags.entry("lob_side_fallback".into()).or_default() += 1;
                }
                values.extend(f.values.iter().map(|&x| norm.z(x)));
            }
        }
    }
    debug_assert_eq!(values.len(), ctx.layout.len());
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SkipReason::Unavailable("non_finite"));
    }
    let label = build_label(dataset, product, t, ctx.cfg.horizon_secs).map_err(|_| SkipReason::NoReference)?;
    Ok(Sample {
        product: *product,
        forecast_time: t,
        period: ctx.period,
        features: FeatureVector {
            values,
            layout: Arc::clone(ctx.layout),
        },
        reference_price: label.reference,
        future_price: label.future,
        label: label.label,
        normalizer: norm,
    })
}

/// Builds every sample of `period` for `feature_set`, ordered by product then
/// forecast time. `time_range` filters forecast times to `[from, to)`.
pub fn assemble(
    dataset: &MarketDataset,
    feature_set: FeatureSetId,
    period: PeriodId,
    time_range: Option<(Timestamp, Timestamp)>,
    cfg: &AssembleConfig,
) -> Result<Assembly> {
    cfg.validate()?;
    let blocks = feature_set.blocks(period, cfg.selected_p2to1_includes_h_plus_2h)?;
    let layout = Arc::new(FeatureLayout::build(&blocks, cfg.h_max));
    let ctx = Ctx {
        dataset,
        cfg,
        blocks: &blocks,
        layout: &layout,
        period,
    };
    let needs_fundamentals = blocks.contains(&Block::Fundamentals);
    let products: Vec<Product> = dataset.hourly_products().copied().collect();

    let per_product: Vec<(Vec<Sample>, Vec<SkippedSample>, SkipCounts)> = products
        .par_iter()
        .map(|product| {
            let mut samples = Vec::new();
            let mut skipped = Vec::new();
            let mut flags = SkipCounts::new();
            let fundamentals = if needs_fundamentals {
                let f = fundamentals_features(dataset, product).ok();
                if f.map(|f| f.intraday_substituted).unwrap_or(false) {
                    *flags.entry("fundamentals_intraday_substituted".into()).or_default() += 1;
                }
                f
            } else {
                None
            };
            for t in cfg.grid.times(product) {
                if let Some((from, to)) = time_range {
                    if t < from || t >= to {
                        continue;
                    }
                }
                if period_of(t, product).ok() != Some(period) {
                    continue;
                }
                match sample_at(&ctx, product, t, fundamentals.as_ref(), &mut flags) {
                    Ok(s) => samples.push(s),
                    Err(reason) => skipped.push(SkippedSample {
                        product: *product,
                        forecast_time: t,
                        reason: reason.to_string(),
                    }),
                }
            }
            (samples, skipped, flags)
        })
        .collect();

    let mut samples = Vec::new();
    let mut skip_log = Vec::new();
    let mut flags = SkipCounts::new();
    for (s, k, f) in per_product {
        samples.extend(s);
        skip_log.extend(k);
        merge_counts(&mut flags, &f);
    }
    let skips = count_reasons(&skip_log);
    Ok(Assembly {
        feature_set,
        period,
        layout,
        samples,
        skips,
        skip_log,
        flags,
    })
}

/// Feature vector of a single (product, time) pair, or why it is unavailable.
pub fn features_at(
    dataset: &MarketDataset,
    product: &Product,
    t: Timestamp,
    feature_set: FeatureSetId,
    cfg: &AssembleConfig,
) -> Result<Vec<f64>> {
    let period = period_of(t, product)?;
    let blocks = feature_set.blocks(period, cfg.selected_p2to1_includes_h_plus_2h)?;
    let layout = Arc::new(FeatureLayout::build(&blocks, cfg.h_max));
    let ctx = Ctx {
        dataset,
        cfg,
        blocks: &blocks,
        layout: &layout,
        period,
    };
    let fundamentals = fundamentals_features(dataset, product).ok();
    let mut flags = SkipCounts::new();
    sample_at(&ctx, product, t, fundamentals.as_ref(), &mut flags)
        .map(|s| s.features.values)
        .map_err(|r| Error::FeatureUnavailable(r.to_string()))
}
