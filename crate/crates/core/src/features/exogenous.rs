//! Non-price inputs: system imbalance and load/renewable forecasts.

use crate::error::{Error, Result};
use crate::market::{Horizon, MarketDataset, Product, Timestamp, HOUR};

/// Saldo of the latest quarter-hour whose value is published at or before `t`.
pub fn imbalance_feature(dataset: &MarketDataset, t: Timestamp) -> Result<f64> {
    dataset
        .imbalance_asof(t)
        .map(|r| r.saldo_mw)
        .ok_or_else(|| Error::FeatureUnavailable(format!("no imbalance published by {t}")))
}

pub const FUNDAMENTAL_NAMES: [&str; 7] = [
    "load_da",
    "solar_da",
    "solar_id",
    "wind_on_da",
    "wind_on_id",
    "wind_off_da",
    "wind_off_id",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalFeatures {
    /// Ordered as [`FUNDAMENTAL_NAMES`].
    pub values: [f64; 7],
    /// Intraday record missing; day-ahead values stand in for it.
    pub intraday_substituted: bool,
}

/// Forecasts for the product's delivery hour; constant over the forecasting window.
pub fn fundamentals_features(dataset: &MarketDataset, product: &Product) -> Result<FundamentalFeatures> {
    let hour = product.delivery_start.add_secs(-product.delivery_start.secs().rem_euclid(HOUR));
    let da = dataset
        .fundamental(hour, Horizon::DayAhead)
        .ok_or_else(|| Error::FeatureUnavailable(format!("no day-ahead fundamentals for {hour}")))?;
    let load = da
        .load_mw
        .ok_or_else(|| Error::FeatureUnavailable(format!("no load forecast for {hour}")))?;
    let id = dataset.fundamental(hour, Horizon::Intraday);
    let id_rec = id.unwrap_or(da);
    Ok(FundamentalFeatures {
        values: [
            load,
            da.solar_mw,
            id_rec.solar_mw,
            da.wind_onshore_mw,
            id_rec.wind_onshore_mw,
            da.wind_offshore_mw,
            id_rec.wind_offshore_mw,
        ],
        intraday_substituted: id.is_none(),
    })
}
