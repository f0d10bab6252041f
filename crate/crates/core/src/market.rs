//! Domain types for continuous intraday (CID) power markets and the
//! time/product algebra the rest of the crate builds on.
//!
//! All timestamps are UTC seconds since the Unix epoch. Market-local
//! (CET/CEST) semantics are handled at ingestion, never here.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MINUTE: i64 = 60;
pub const QUARTER_HOUR: i64 = 15 * MINUTE;
pub const HOUR: i64 = 60 * MINUTE;
pub const DAY: i64 = 24 * HOUR;

/// UTC instant with second precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_secs(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> i64 {
        self.0
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self> {
        DateTime::parse_from_rfc3339(s.trim())
            .map(|dt| Timestamp(dt.timestamp()))
            .map_err(|e| Error::InvalidArgument(format!("bad RFC 3339 timestamp {s:?}: {e}")))
    }

    pub fn to_rfc3339(self) -> String {
        self.to_datetime()
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0, 0).expect("timestamp within chrono range")
    }

    pub const fn add_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    pub const fn add_minutes(self, minutes: i64) -> Self {
        Timestamp(self.0 + minutes * MINUTE)
    }

    pub const fn add_days(self, days: i64) -> Self {
        Timestamp(self.0 + days * DAY)
    }

    /// Signed difference `self - other` in seconds.
    pub const fn since(self, other: Timestamp) -> i64 {
        self.0 - other.0
    }

    pub const fn is_aligned(self, step_secs: i64) -> bool {
        self.0.rem_euclid(step_secs) == 0
    }

    /// Start of the UTC day containing this instant.
    pub const fn floor_day(self) -> Self {
        Timestamp(self.0 - self.0.rem_euclid(DAY))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl FromStr for Timestamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Timestamp::parse_rfc3339(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse_rfc3339(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProductLength {
    QuarterHour,
    Hour,
}

impl ProductLength {
    pub const fn minutes(self) -> i64 {
        match self {
            ProductLength::QuarterHour => 15,
            ProductLength::Hour => 60,
        }
    }

    pub fn from_minutes(minutes: i64) -> Result<Self> {
        match minutes {
            15 => Ok(ProductLength::QuarterHour),
            60 => Ok(ProductLength::Hour),
            other => Err(Error::InvalidArgument(format!(
                "product length must be 15 or 60 minutes, got {other}"
            ))),
        }
    }
}

/// A tradable delivery period `(delivery_start, length)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Product {
    pub delivery_start: Timestamp,
    pub length: ProductLength,
}

impl Product {
    pub fn new(delivery_start: Timestamp, length: ProductLength) -> Result<Self> {
        let step = match length {
            ProductLength::QuarterHour => QUARTER_HOUR,
            ProductLength::Hour => HOUR,
        };
        if !delivery_start.is_aligned(step) {
            return Err(Error::InvalidArgument(format!(
                "delivery start {delivery_start} is not aligned to {} minutes",
                length.minutes()
            )));
        }
        Ok(Product {
            delivery_start,
            length,
        })
    }

    pub fn hourly(delivery_start: Timestamp) -> Result<Self> {
        Product::new(delivery_start, ProductLength::Hour)
    }

    pub fn quarter_hourly(delivery_start: Timestamp) -> Result<Self> {
        Product::new(delivery_start, ProductLength::QuarterHour)
    }

    pub fn is_hourly(&self) -> bool {
        self.length == ProductLength::Hour
    }

    /// The four quarter-hour products covering an hourly product's delivery.
    pub fn quarter_hours(&self) -> [Product; 4] {
        let s = self.delivery_start;
        [0, 15, 30, 45].map(|m| Product {
            delivery_start: s.add_minutes(m),
            length: ProductLength::QuarterHour,
        })
    }

    /// Hourly product whose delivery starts `hours` later (or earlier).
    pub fn shifted_hours(&self, hours: i64) -> Product {
        Product {
            delivery_start: self.delivery_start.add_secs(hours * HOUR),
            length: self.length,
        }
    }
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}m", self.delivery_start, self.length.minutes())
    }
}

/// Index into [`MarketDataset::areas`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AreaId(pub u16);

/// One executed transaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trade {
    pub product: Product,
    pub exec_time: Timestamp,
    pub volume: f64,
    pub price: f64,
    pub area: AreaId,
}

/// A trade as stored on a product's tape; the product is implied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TapeEntry {
    pub exec_time: Timestamp,
    pub volume: f64,
    pub price: f64,
    pub area: AreaId,
}

/// Volume-weighted running moments (West's incremental algorithm).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    pub n: usize,
    pub weight: f64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, volume: f64, price: f64) {
        self.n += 1;
        self.weight += volume;
        let delta = price - self.mean;
        self.mean += delta * volume / self.weight;
        self.m2 += volume * delta * (price - self.mean);
    }

    /// Volume-weighted standard deviation with the `(n-1)/n` factor.
    pub fn vwsd(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let denom = (n - 1.0) / n * self.weight;
        Some((self.m2.max(0.0) / denom).sqrt())
    }
}

/// All trades of one product, sorted by execution time (ingestion order on ties).
#[derive(Clone, Debug, Default)]
pub struct TradeTape {
    entries: Vec<TapeEntry>,
    running: Vec<RunningStats>,
}

impl TradeTape {
    fn from_entries(mut entries: Vec<TapeEntry>) -> Self {
        // stable sort keeps ingestion order for equal timestamps
        entries.sort_by_key(|e| e.exec_time);
        let mut acc = RunningStats::default();
        let running = entries
            .iter()
            .map(|e| {
                acc.push(e.volume, e.price);
                acc
            })
            .collect();
        TradeTape { entries, running }
    }

    pub fn entries(&self) -> &[TapeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trades with `exec_time <= t`.
    pub fn count_asof(&self, t: Timestamp) -> usize {
        self.entries.partition_point(|e| e.exec_time <= t)
    }

    /// Trades with `exec_time <= t`.
    pub fn asof(&self, t: Timestamp) -> &[TapeEntry] {
        &self.entries[..self.count_asof(t)]
    }

    /// Trades with `lo <= exec_time <= hi`.
    pub fn closed_window(&self, lo: Timestamp, hi: Timestamp) -> &[TapeEntry] {
        let start = self.entries.partition_point(|e| e.exec_time < lo);
        let end = self.entries.partition_point(|e| e.exec_time <= hi);
        &self.entries[start..end.max(start)]
    }

    /// Trades with `lo < exec_time <= hi`.
    pub fn half_open_window(&self, lo: Timestamp, hi: Timestamp) -> &[TapeEntry] {
        let start = self.entries.partition_point(|e| e.exec_time <= lo);
        let end = self.entries.partition_point(|e| e.exec_time <= hi);
        &self.entries[start..end.max(start)]
    }

    /// Running volume-weighted moments over all trades with `exec_time <= t`.
    pub fn stats_asof(&self, t: Timestamp) -> Option<RunningStats> {
        match self.count_asof(t) {
            0 => None,
            k => Some(self.running[k - 1]),
        }
    }
}

/// Bid/ask ladders of resting limit orders for one product at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LobSnapshot {
    pub product: Product,
    pub time: Timestamp,
    /// (price, volume), best (highest) first.
    pub bids: Vec<(f64, f64)>,
    /// (price, volume), best (lowest) first.
    pub asks: Vec<(f64, f64)>,
}

impl LobSnapshot {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("{} @ {}: {msg}", self.product, self.time)));
        for side in [&self.bids, &self.asks] {
            if let Some((p, v)) = side.iter().find(|(p, v)| !(p.is_finite() && v.is_finite() && *v > 0.0)) {
                return bad(format!("invalid level ({p}, {v})"));
            }
        }
        if self.bids.windows(2).any(|w| w[1].0 > w[0].0) {
            return bad("bids not sorted by descending price".into());
        }
        if self.asks.windows(2).any(|w| w[1].0 < w[0].0) {
            return bad("asks not sorted by ascending price".into());
        }
        if let (Some(b), Some(a)) = (self.bids.first(), self.asks.first()) {
            if b.0 >= a.0 {
                return bad(format!("crossed book: best bid {} >= best ask {}", b.0, a.0));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    DayAhead,
    Intraday,
}

impl Horizon {
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::DayAhead => "day_ahead",
            Horizon::Intraday => "intraday",
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day_ahead" => Ok(Horizon::DayAhead),
            "intraday" => Ok(Horizon::Intraday),
            other => Err(Error::Unknown(format!("horizon {other:?}"))),
        }
    }
}

/// Load and renewable generation forecast for one delivery hour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalRecord {
    pub delivery_start: Timestamp,
    pub horizon: Horizon,
    /// Only published day-ahead.
    pub load_mw: Option<f64>,
    pub solar_mw: f64,
    pub wind_onshore_mw: f64,
    pub wind_offshore_mw: f64,
}

impl FundamentalRecord {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.load_mw.unwrap_or(0.0),
            self.solar_mw,
            self.wind_onshore_mw,
            self.wind_offshore_mw,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fundamental record at {} has negative or non-finite values",
                self.delivery_start
            )));
        }
        if self.horizon == Horizon::DayAhead && self.load_mw.is_none() {
            return Err(Error::InvalidArgument(format!(
                "day-ahead fundamental record at {} lacks load",
                self.delivery_start
            )));
        }
        Ok(())
    }
}

/// Quarter-hourly system imbalance (NRV saldo) with its publication time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImbalanceRecord {
    pub quarter_start: Timestamp,
    pub saldo_mw: f64,
    pub publish_time: Timestamp,
}

impl ImbalanceRecord {
    pub const MIN_DELAY: i64 = 15 * MINUTE;
    pub const MAX_DELAY: i64 = 45 * MINUTE;

    pub fn validate(&self) -> Result<()> {
        if !self.quarter_start.is_aligned(QUARTER_HOUR) {
            return Err(Error::InvalidArgument(format!(
                "imbalance quarter {} not aligned",
                self.quarter_start
            )));
        }
        let delay = self.publish_time.since(self.quarter_start);
        if !(Self::MIN_DELAY..=Self::MAX_DELAY).contains(&delay) {
            return Err(Error::InvalidArgument(format!(
                "imbalance for {} published {delay}s after quarter start (allowed 900..=2700)",
                self.quarter_start
            )));
        }
        if !self.saldo_mw.is_finite() {
            return Err(Error::InvalidArgument("non-finite saldo".into()));
        }
        Ok(())
    }
}

/// Immutable, indexed market data. Every lookup takes a query time and
/// only returns records stamped at or before it.
#[derive(Clone, Debug, Default)]
pub struct MarketDataset {
    areas: Vec<String>,
    tapes: BTreeMap<Product, TradeTape>,
    books: BTreeMap<Product, Vec<LobSnapshot>>,
    fundamentals: BTreeMap<(Timestamp, Horizon), FundamentalRecord>,
    imbalances: Vec<ImbalanceRecord>,
    time_range: Option<(Timestamp, Timestamp)>,
}

static EMPTY_TAPE: TradeTape = TradeTape {
    entries: Vec::new(),
    running: Vec::new(),
};

impl MarketDataset {
    pub fn builder() -> MarketDatasetBuilder {
        MarketDatasetBuilder::default()
    }

    pub fn areas(&self) -> &[String] {
        &self.areas
    }

    pub fn area_name(&self, id: AreaId) -> &str {
        self.areas.get(id.0 as usize).map(String::as_str).unwrap_or("?")
    }

    /// Span covered by all records (earliest, latest timestamp).
    pub fn time_range(&self) -> Option<(Timestamp, Timestamp)> {
        self.time_range
    }

    pub fn tape(&self, product: &Product) -> &TradeTape {
        self.tapes.get(product).unwrap_or(&EMPTY_TAPE)
    }

    pub fn products(&self) -> impl Iterator<Item = &Product> {
        self.tapes.keys()
    }

    pub fn hourly_products(&self) -> impl Iterator<Item = &Product> {
        self.tapes.keys().filter(|p| p.is_hourly())
    }

    pub fn trades_asof(&self, product: &Product, t: Timestamp) -> &[TapeEntry] {
        self.tape(product).asof(t)
    }

    pub fn trade_count(&self) -> usize {
        self.tapes.values().map(TradeTape::len).sum()
    }

    pub fn books(&self) -> impl Iterator<Item = (&Product, &[LobSnapshot])> {
        self.books.iter().map(|(p, v)| (p, v.as_slice()))
    }

    /// Latest snapshot of `product` taken at or before `t`.
    pub fn snapshot_asof(&self, product: &Product, t: Timestamp) -> Option<&LobSnapshot> {
        let snaps = self.books.get(product)?;
        let k = snaps.partition_point(|s| s.time <= t);
        k.checked_sub(1).map(|i| &snaps[i])
    }

    pub fn fundamentals(&self) -> impl Iterator<Item = &FundamentalRecord> {
        self.fundamentals.values()
    }

    pub fn fundamental(&self, delivery_start: Timestamp, horizon: Horizon) -> Option<&FundamentalRecord> {
        self.fundamentals.get(&(delivery_start, horizon))
    }

    pub fn imbalances(&self) -> &[ImbalanceRecord] {
        &self.imbalances
    }

    /// The published imbalance record with the latest quarter start, as of `t`.
    pub fn imbalance_asof(&self, t: Timestamp) -> Option<&ImbalanceRecord> {
        // anything published by t started at least MIN_DELAY earlier
        let end = self
            .imbalances
            .partition_point(|r| r.quarter_start.add_secs(ImbalanceRecord::MIN_DELAY) <= t);
        // records older than MAX_DELAY are always published, so this stops quickly
        self.imbalances[..end].iter().rev().find(|r| r.publish_time <= t)
    }
}

#[derive(Debug, Default)]
pub struct MarketDatasetBuilder {
    areas: Vec<String>,
    tapes: BTreeMap<Product, Vec<TapeEntry>>,
    books: BTreeMap<Product, Vec<LobSnapshot>>,
    fundamentals: BTreeMap<(Timestamp, Horizon), FundamentalRecord>,
    imbalances: Vec<ImbalanceRecord>,
}

impl MarketDatasetBuilder {
    /// Interns an area name.
    pub fn area(&mut self, name: &str) -> AreaId {
        if let Some(i) = self.areas.iter().position(|a| a == name) {
            return AreaId(i as u16);
        }
        self.areas.push(name.to_string());
        AreaId((self.areas.len() - 1) as u16)
    }

    pub fn add_trade(&mut self, trade: Trade) -> Result<()> {
        if !(trade.volume > 0.0 && trade.volume.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trade volume must be positive, got {}",
                trade.volume
            )));
        }
        if !trade.price.is_finite() {
            return Err(Error::InvalidArgument("non-finite trade price".into()));
        }
        if trade.exec_time >= trade.product.delivery_start {
            return Err(Error::InvalidArgument(format!(
                "trade at {} is not before delivery start of {}",
                trade.exec_time, trade.product
            )));
        }
        if trade.area.0 as usize >= self.areas.len() {
            return Err(Error::InvalidArgument(format!("unknown area id {}", trade.area.0)));
        }
        self.tapes.entry(trade.product).or_default().push(TapeEntry {
            exec_time: trade.exec_time,
            volume: trade.volume,
            price: trade.price,
            area: trade.area,
        });
        Ok(())
    }

    pub fn add_snapshot(&mut self, snapshot: LobSnapshot) -> Result<()> {
        snapshot.validate()?;
        self.books.entry(snapshot.product).or_default().push(snapshot);
        Ok(())
    }

    pub fn add_fundamental(&mut self, record: FundamentalRecord) -> Result<()> {
        record.validate()?;
        let key = (record.delivery_start, record.horizon);
        if self.fundamentals.insert(key, record).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate fundamental record for {} {}",
                record.delivery_start,
                record.horizon.as_str()
            )));
        }
        Ok(())
    }

    pub fn add_imbalance(&mut self, record: ImbalanceRecord) -> Result<()> {
        record.validate()?;
        self.imbalances.push(record);
        Ok(())
    }

    pub fn build(self) -> MarketDataset {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        let mut see = |t: Timestamp| {
            lo = lo.min(t.secs());
            hi = hi.max(t.secs());
        };
        let tapes: BTreeMap<_, _> = self
            .tapes
            .into_iter()
            .map(|(p, entries)| (p, TradeTape::from_entries(entries)))
            .collect();
        for tape in tapes.values() {
            if let (Some(a), Some(b)) = (tape.entries.first(), tape.entries.last()) {
                see(a.exec_time);
                see(b.exec_time);
            }
        }
        let mut books = self.books;
        for snaps in books.values_mut() {
            snaps.sort_by_key(|s| s.time);
            if let (Some(a), Some(b)) = (snaps.first(), snaps.last()) {
                see(a.time);
                see(b.time);
            }
        }
        let mut imbalances = self.imbalances;
        imbalances.sort_by_key(|r| (r.quarter_start, r.publish_time));
        for r in &imbalances {
            see(r.quarter_start);
            see(r.publish_time);
        }
        for r in self.fundamentals.values() {
            see(r.delivery_start);
        }
        let time_range = (lo <= hi).then_some((Timestamp(lo), Timestamp(hi)));
        MarketDataset {
            areas: self.areas,
            tapes,
            books,
            fundamentals: self.fundamentals,
            imbalances,
            time_range,
        }
    }
}

/// Lead-time band of the forecasting window; each band gets its own model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeriodId {
    /// 3 h to 2 h before delivery.
    #[serde(rename = "p3to2")]
    P3to2,
    /// 2 h to 1 h before delivery.
    #[serde(rename = "p2to1")]
    P2to1,
    /// 1 h to 35 min before delivery.
    #[serde(rename = "p1tohalf")]
    P1toHalf,
}

impl PeriodId {
    pub const ALL: [PeriodId; 3] = [PeriodId::P3to2, PeriodId::P2to1, PeriodId::P1toHalf];

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodId::P3to2 => "p3to2",
            PeriodId::P2to1 => "p2to1",
            PeriodId::P1toHalf => "p1tohalf",
        }
    }

    /// Hour offsets of the neighboring hourly products still trading in this period.
    pub fn hourly_neighbor_offsets(self) -> &'static [i64] {
        match self {
            PeriodId::P3to2 => &[-2, -1, 1, 2],
            PeriodId::P2to1 => &[-1, 1, 2],
            PeriodId::P1toHalf => &[1, 2],
        }
    }
}

impl fmt::Display for PeriodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PeriodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p3to2" => Ok(PeriodId::P3to2),
            "p2to1" => Ok(PeriodId::P2to1),
            "p1tohalf" => Ok(PeriodId::P1toHalf),
            other => Err(Error::Unknown(format!("period id {other:?}"))),
        }
    }
}

/// Hourly neighbors of `current` trading in `period`, followed by the
/// quarter-hour products of those neighbors and of `current` itself.
pub fn neighbors_for_period(current: &Product, period: PeriodId) -> Result<Vec<Product>> {
    if !current.is_hourly() {
        return Err(Error::InvalidArgument(format!(
            "neighbors are defined for hourly products, got {current}"
        )));
    }
    let hourly: Vec<Product> = period
        .hourly_neighbor_offsets()
        .iter()
        .map(|&h| current.shifted_hours(h))
        .collect();
    let mut qh_hours = hourly.clone();
    qh_hours.push(*current);
    qh_hours.sort();
    let mut out = hourly;
    out.extend(qh_hours.iter().flat_map(|p| p.quarter_hours()));
    Ok(out)
}

/// Minute grid of forecast times `[s - start_lead, s - end_lead]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastGrid {
    pub start_lead_min: i64,
    pub end_lead_min: i64,
    pub step_min: i64,
}

impl Default for ForecastGrid {
    fn default() -> Self {
        ForecastGrid {
            start_lead_min: 180,
            end_lead_min: 35,
            step_min: 1,
        }
    }
}

impl ForecastGrid {
    pub fn validate(&self) -> Result<()> {
        if self.step_min <= 0 || self.end_lead_min <= 0 || self.start_lead_min < self.end_lead_min {
            return Err(Error::Config(format!("invalid forecast grid {self:?}")));
        }
        if self.start_lead_min > 180 || self.end_lead_min < 35 {
            return Err(Error::Config(format!(
                "forecast grid {self:?} must lie within the [s-180, s-35] min window"
            )));
        }
        Ok(())
    }

    pub fn times(&self, product: &Product) -> impl Iterator<Item = Timestamp> + '_ {
        let s = product.delivery_start;
        let step = self.step_min;
        let n = (self.start_lead_min - self.end_lead_min) / step + 1;
        let start = self.start_lead_min;
        (0..n).map(move |i| s.add_minutes(-(start - i * step)))
    }

    pub fn len(&self) -> usize {
        ((self.start_lead_min - self.end_lead_min) / self.step_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Period of a forecast time relative to the product's delivery start.
/// Boundaries belong to the later (shorter lead time) period.
pub fn period_of(forecast_time: Timestamp, current: &Product) -> Result<PeriodId> {
    let lead = current.delivery_start.since(forecast_time);
    if !(35 * MINUTE..=180 * MINUTE).contains(&lead) {
        return Err(Error::OutsideWindow(format!(
            "{forecast_time} is {}s before delivery of {current}",
            lead
        )));
    }
    Ok(if lead > 120 * MINUTE {
        PeriodId::P3to2
    } else if lead > 60 * MINUTE {
        PeriodId::P2to1
    } else {
        PeriodId::P1toHalf
    })
}
