//! Trade-tape price statistics: VWAP, VWSD, the last-four-trades price,
//! lagged interval VWAPs and rolling z-normalization.

use crate::error::{Error, Result};
use crate::market::{MarketDataset, Product, TapeEntry, Timestamp, Trade};

/// Anything carrying a traded volume and price.
pub trait PricedVolume {
    fn volume(&self) -> f64;
    fn price(&self) -> f64;
}

impl PricedVolume for TapeEntry {
    fn volume(&self) -> f64 {
        self.volume
    }
    fn price(&self) -> f64 {
        self.price
    }
}

impl PricedVolume for Trade {
    fn volume(&self) -> f64 {
        self.volume
    }
    fn price(&self) -> f64 {
        self.price
    }
}

/// `(volume, price)`
impl PricedVolume for (f64, f64) {
    fn volume(&self) -> f64 {
        self.0
    }
    fn price(&self) -> f64 {
        self.1
    }
}

/// Summary of a trade subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceStats {
    pub vwap: f64,
    /// `None` for fewer than two trades.
    pub vwsd: Option<f64>,
    pub n_trades: usize,
    pub total_volume: f64,
}

pub fn vwap<T: PricedVolume>(trades: &[T]) -> Result<f64> {
    if trades.is_empty() {
        return Err(Error::EmptySubset);
    }
    let (num, den) = trades
        .iter()
        .fold((0.0, 0.0), |(n, d), t| (n + t.volume() * t.price(), d + t.volume()));
    Ok(num / den)
}

/// Volume-weighted standard deviation, normalized by `(|S|-1)/|S| * sum(v)`.
pub fn vwsd<T: PricedVolume>(trades: &[T]) -> Result<f64> {
    if trades.len() < 2 {
        return Err(Error::TooFewTrades {
            needed: 2,
            got: trades.len(),
        });
    }
    let mean = vwap(trades)?;
    let n = trades.len() as f64;
    let (ss, vol) = trades.iter().fold((0.0, 0.0), |(ss, vol), t| {
        let d = t.price() - mean;
        (ss + t.volume() * d * d, vol + t.volume())
    });
    Ok((ss / ((n - 1.0) / n * vol)).sqrt())
}

pub fn price_stats<T: PricedVolume>(trades: &[T]) -> Result<PriceStats> {
    Ok(PriceStats {
        vwap: vwap(trades)?,
        vwsd: vwsd(trades).ok(),
        n_trades: trades.len(),
        total_volume: trades.iter().map(PricedVolume::volume).sum(),
    })
}

/// VWAP of the (up to) four most recent trades at or before `t`.
pub fn last4_price(dataset: &MarketDataset, product: &Product, t: Timestamp) -> Result<f64> {
    let past = dataset.trades_asof(product, t);
    if past.is_empty() {
        return Err(Error::NoReferencePrice);
    }
    vwap(&past[past.len().saturating_sub(4)..])
}

/// Lagged one-interval VWAPs `[lag 0, .., lag h_max-1]` where lag `h`
/// covers `exec_time` in the closed interval `[t-(h+1)delta, t-h*delta]`.
///
/// Empty intervals take the nearest older non-empty interval's value;
/// intervals older than every non-empty one take the nearest newer value.
/// If no interval has trades the vector is filled with the all-history VWAP.
/// For a product already in delivery the vector is frozen at its delivery start.
/// Trades of all delivery areas are pooled.
pub fn lag_vwap_vector(
    dataset: &MarketDataset,
    product: &Product,
    t: Timestamp,
    h_max: usize,
    delta_secs: i64,
) -> Result<Vec<f64>> {
    if h_max == 0 || delta_secs <= 0 {
        return Err(Error::InvalidArgument(format!(
            "h_max must be >= 1 and delta > 0 (got {h_max}, {delta_secs}s)"
        )));
    }
    let asof = t.min(product.delivery_start);
    let tape = dataset.tape(product);
    let history = tape.asof(asof);
    if history.is_empty() {
        return Err(Error::FeatureUnavailable(format!("{product} has no trades before {asof}")));
    }
    let raw: Vec<Option<f64>> = (0..h_max as i64)
        .map(|h| {
            let hi = asof.add_secs(-h * delta_secs);
            let lo = asof.add_secs(-(h + 1) * delta_secs);
            vwap(tape.closed_window(lo, hi)).ok()
        })
        .collect();
    Ok(fill_gaps(&raw).unwrap_or_else(|| vec![vwap(history).expect("non-empty"); h_max]))
}

/// Fill forward in time (from older entries), then backward for the oldest gap.
/// `None` when every entry is missing.
pub(crate) fn fill_gaps(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let oldest_known = raw.iter().rposition(Option::is_some)?;
    let mut out = vec![0.0; raw.len()];
    let mut carry = raw[oldest_known].expect("known");
    for h in (0..raw.len()).rev() {
        if let Some(v) = raw[h] {
            carry = v;
        }
        out[h] = carry;
    }
    Some(out)
}

/// Rolling z-score parameters from every trade of a product up to the query time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub sd: f64,
}

impl Normalizer {
    pub const MIN_SD: f64 = 1e-9;

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        self.mean + z * self.sd
    }
}

pub fn normalizer(dataset: &MarketDataset, product: &Product, t: Timestamp) -> Result<Normalizer> {
    let stats = dataset
        .tape(product)
        .stats_asof(t)
        .ok_or(Error::DegenerateNormalization)?;
    match stats.vwsd() {
        Some(sd) if sd > Normalizer::MIN_SD => Ok(Normalizer {
            mean: stats.mean,
            sd,
        }),
        _ => Err(Error::DegenerateNormalization),
    }
}

pub fn normalize(x: f64, product: &Product, t: Timestamp, dataset: &MarketDataset) -> Result<f64> {
    Ok(normalizer(dataset, product, t)?.z(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AreaId, MarketDataset};

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn tape(trades: &[(i64, f64, f64)]) -> (MarketDataset, Product) {
        let p = Product::hourly(ts("2024-06-01T10:00:00Z")).unwrap();
        let base = ts("2024-06-01T08:00:00Z");
        let mut b = MarketDataset::builder();
        b.area("DE");
        for &(sec, v, price) in trades {
            b.add_trade(Trade {
                product: p,
                exec_time: base.add_secs(sec),
                volume: v,
                price,
                area: AreaId(0),
            })
            .unwrap();
        }
        (b.build(), p)
    }

    #[test]
    fn vwap_examples() {
        assert_eq!(vwap(&[(2.0, 10.0), (2.0, 20.0)]).unwrap(), 15.0);
        assert_eq!(vwap(&[(5.0, 42.5)]).unwrap(), 42.5);
        assert_eq!(vwap(&[(1.0, 10.0), (3.0, 20.0)]).unwrap(), 17.5);
        assert!(matches!(vwap::<(f64, f64)>(&[]), Err(Error::EmptySubset)));
    }

    #[test]
    fn vwsd_examples() {
        assert_eq!(vwsd(&[(1.0, 10.0), (1.0, 10.0)]).unwrap(), 0.0);
        let s = 50f64.sqrt();
        assert!((vwsd(&[(1.0, 10.0), (1.0, 20.0)]).unwrap() - s).abs() < 1e-12);
        assert!((vwsd(&[(2.0, 10.0), (2.0, 20.0)]).unwrap() - s).abs() < 1e-12);
        assert!(vwsd(&[(1.0, 10.0)]).is_err());
    }

    #[test]
    fn last4_uses_newest_four() {
        let (ds, p) = tape(&[(0, 1.0, 100.0), (10, 1.0, 100.0), (20, 1.0, 1.0), (30, 1.0, 2.0), (40, 1.0, 3.0), (50, 1.0, 4.0)]);
        assert_eq!(last4_price(&ds, &p, ts("2024-06-01T08:05:00Z")).unwrap(), 2.5);
    }

    #[test]
    fn last4_falls_back_to_available() {
        let (ds, p) = tape(&[(0, 1.0, 10.0), (10, 3.0, 20.0)]);
        assert_eq!(last4_price(&ds, &p, ts("2024-06-01T08:01:00Z")).unwrap(), 17.5);
        assert!(matches!(
            last4_price(&ds, &p, ts("2024-06-01T07:59:00Z")),
            Err(Error::NoReferencePrice)
        ));
    }

    #[test]
    fn last4_ties_follow_ingestion_order() {
        // five trades at the same second: the last four ingested are used
        let (ds, p) = tape(&[(5, 1.0, 100.0), (5, 1.0, 1.0), (5, 1.0, 2.0), (5, 1.0, 3.0), (5, 1.0, 4.0)]);
        assert_eq!(last4_price(&ds, &p, ts("2024-06-01T08:00:05Z")).unwrap(), 2.5);
    }

    #[test]
    fn lag_vector_constant_price() {
        let trades: Vec<_> = (0..30).map(|m| (m * 60 + 30, 1.0, 50.0)).collect();
        let (ds, p) = tape(&trades);
        let v = lag_vwap_vector(&ds, &p, ts("2024-06-01T08:30:00Z"), 10, 60).unwrap();
        assert_eq!(v, vec![50.0; 10]);
    }

    #[test]
    fn lag_vector_fills_from_single_window() {
        // t = 08:20; lag 3 covers [08:16, 08:17]
        let (ds, p) = tape(&[(16 * 60 + 30, 1.0, 42.0)]);
        let v = lag_vwap_vector(&ds, &p, ts("2024-06-01T08:20:00Z"), 10, 60).unwrap();
        assert_eq!(v, vec![42.0; 10]);
    }

    #[test]
    fn lag_vector_forward_fill_prefers_older() {
        // lag 1 empty between lag 0 (price 2) and lag 2 (price 7)
        let (ds, p) = tape(&[(17 * 60 + 30, 1.0, 7.0), (19 * 60 + 30, 1.0, 2.0)]);
        let v = lag_vwap_vector(&ds, &p, ts("2024-06-01T08:20:00Z"), 4, 60).unwrap();
        assert_eq!(v, vec![2.0, 7.0, 7.0, 7.0]);
    }

    #[test]
    fn lag_vector_all_empty_uses_history() {
        let (ds, p) = tape(&[(0, 1.0, 10.0), (30, 3.0, 20.0)]);
        let v = lag_vwap_vector(&ds, &p, ts("2024-06-01T09:00:00Z"), 10, 60).unwrap();
        assert_eq!(v, vec![17.5; 10]);
    }

    #[test]
    fn lag_vector_boundary_trade_in_two_windows() {
        // trade exactly at t-60s belongs to lag 0 and lag 1
        let (ds, p) = tape(&[(19 * 60, 1.0, 5.0), (18 * 60 + 30, 1.0, 9.0)]);
        let v = lag_vwap_vector(&ds, &p, ts("2024-06-01T08:20:00Z"), 2, 60).unwrap();
        assert_eq!(v, vec![5.0, 7.0]);
    }

    #[test]
    fn lag_vector_unavailable_without_trades() {
        let (ds, p) = tape(&[(600, 1.0, 5.0)]);
        assert!(lag_vwap_vector(&ds, &p, ts("2024-06-01T08:05:00Z"), 10, 60).is_err());
    }

    #[test]
    fn normalize_identities() {
        let (ds, p) = tape(&[(0, 1.0, 10.0), (10, 1.0, 20.0), (20, 2.0, 16.0)]);
        let t = ts("2024-06-01T08:01:00Z");
        let n = normalizer(&ds, &p, t).unwrap();
        assert!(normalize(n.mean, &p, t, &ds).unwrap().abs() < 1e-12);
        for k in [-2.0, 1.0, 3.0] {
            assert!((normalize(n.mean + k * n.sd, &p, t, &ds).unwrap() - k).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_degenerate() {
        let (ds, p) = tape(&[(0, 1.0, 10.0), (10, 1.0, 10.0)]);
        let t = ts("2024-06-01T08:01:00Z");
        assert!(matches!(normalizer(&ds, &p, t), Err(Error::DegenerateNormalization)));
        let (ds, p) = tape(&[(0, 1.0, 10.0)]);
        assert!(normalizer(&ds, &p, t).is_err());
    }

    #[test]
    fn fill_gaps_cases() {
        assert_eq!(fill_gaps(&[None, None]), None);
        assert_eq!(
            fill_gaps(&[None, Some(1.0), None, Some(3.0), None]).unwrap(),
            vec![1.0, 1.0, 3.0, 3.0, 3.0]
        );
    }
}
