//! Depth-weighted prices from limit order book snapshots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::LobSnapshot;

pub const LOB_DEPTHS: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LobMode {
    /// Best `d` orders.
    TopRows,
    /// Best orders until `d` MW cumulative volume, marginal order pro rata.
    TopMw,
}

impl LobMode {
    pub fn tag(self) -> &'static str {
        match self {
            LobMode::TopRows => "rows",
            LobMode::TopMw => "mw",
        }
    }
}

/// VWAP of the best `rows` orders (or all of them if fewer).
pub fn top_rows_vwap(levels: &[(f64, f64)], rows: usize) -> Option<f64> {
    let take = &levels[..rows.min(levels.len())];
    if take.is_empty() {
        return None;
    }
    let (pv, v) = take
        .iter()
        .fold((0.0, 0.0), |(pv, v), &(p, q)| (pv + p * q, v + q));
    Some(pv / v)
}

/// VWAP of the first `mw` megawatts of the ladder; whole side if it holds less.
pub fn top_mw_vwap(levels: &[(f64, f64)], mw: f64) -> Option<f64> {
    if levels.is_empty() {
        return None;
    }
    let mut remaining = mw;
    let (mut pv, mut v) = (0.0, 0.0);
    for &(p, q) in levels {
        let fill = q.min(remaining);
        pv += p * fill;
        v += fill;
        remaining -= fill;
        if remaining <= 0.0 {
            break;
        }
    }
    Some(pv / v)
}

/// Six LOB prices: bid at each depth, then ask at each depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LobFeatures {
    pub values: [f64; 6],
    pub bid_fallback: bool,
    pub ask_fallback: bool,
}

/// Per-side depth VWAPs. An empty side takes `fallback` (the current
/// last-four-trades price) for all its depths; both sides empty is an error.
pub fn lob_features(
    snapshot: &LobSnapshot,
    mode: LobMode,
    depths: &[f64; 3],
    fallback: f64,
) -> Result<LobFeatures> {
    if snapshot.bids.is_empty() && snapshot.asks.is_empty() {
        return Err(Error::FeatureUnavailable(format!(
            "empty order book for {} at {}",
            snapshot.product, snapshot.time
        )));
    }
    let side = |levels: &[(f64, f64)]| -> [f64; 3] {
        depths.map(|d| {
            match mode {
                LobMode::TopRows => top_rows_vwap(levels, d as usize),
                LobMode::TopMw => top_mw_vwap(levels, d),
            }
            .unwrap_or(fallback)
        })
    };
    let bid = side(&snapshot.bids);
    let ask = side(&snapshot.asks);
    Ok(LobFeatures {
        values: [bid[0], bid[1], bid[2], ask[0], ask[1], ask[2]],
        bid_fallback: snapshot.bids.is_empty(),
        ask_fallback: snapshot.asks.is_empty(),
    })
}
