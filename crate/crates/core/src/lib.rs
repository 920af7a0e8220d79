//! Mortality-curve forecasting with signature feature decompositions.
//!
//! The pipeline smooths observed log mortality rates into curves, removes the
//! mean curve, turns each age's residual time series into a path and
//! summarizes it with either a truncated or a randomized signature, extracts
//! age-profile basis functions by principal component regression on those
//! features (or by functional PCA for the classical baselines), forecasts the
//! per-year scores with automatically selected ARIMA models, and evaluates
//! everything with an expanding-window backtest reporting MSE by horizon.

pub mod backtest;
pub mod commands;
pub mod config;
pub mod decompose;
pub mod error;
pub mod forecast;
pub mod io;
pub mod model;
pub mod paths;
pub mod randsig;
pub mod signature;
pub mod smoothing;
pub mod surface;

pub use error::{Error, ErrorClass, Result};

/// Crate version recorded in every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
