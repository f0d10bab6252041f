//! Directional price forecasting for continuous intraday (CID) power markets.
//!
//! The crate turns trade tapes, order book snapshots, imbalance readings and
//! fundamentals into period-segmented feature matrices, trains probabilistic
//! up/down classifiers in a weekly walk-forward scheme, and evaluates them by
//! accuracy, PnL, signal-strength percentiles and Diebold-Mariano tests.

pub mod backtest;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod market;
pub mod models;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
