use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::price::{last4_price, vwap};
use crate::market::{MarketDataset, Product, Timestamp};

/// Market direction over the label horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// Strictly rising is up; ties and declines are down.
    pub fn from_prices(reference: f64, future: f64) -> Self {
        if future > reference {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    pub fn is_up(self) -> bool {
        self == Direction::Up
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            other => Err(Error::Unknown(format!("direction {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelInfo {
    pub reference: f64,
    /// `None` when nothing trades within the horizon.
    pub future: Option<f64>,
    pub label: Option<Direction>,
}

/// Reference = last-four-trades price at `t`; future = VWAP of trades in `(t, t + horizon]`.
pub fn build_label(
    dataset: &MarketDataset,
    product: &Product,
    t: Timestamp,
    horizon_secs: i64,
) -> Result<LabelInfo> {
    let reference = last4_price(dataset, product, t)?;
    let future = vwap(dataset.tape(product).half_open_window(t, t.add_secs(horizon_secs))).ok();
    Ok(LabelInfo {
        reference,
        future,
        label: future.map(|f| Direction::from_prices(reference, f)),
    })
}
