//! Cost-aware adaptive forecasting over hourly multi-horizon time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`timeseries`] owns the frame model, preprocessing and windowing;
//! - [`horizon`] selects a training-window length from pairwise distances;
//! - [`regressors`] fits gradient-boosted trees or a feed-forward network;
//! - [`drift`] raises retrain triggers from validation-loss increases;
//! - [`scheduler`] runs the hourly loop and keeps the energy ledger;
//! - [`evaluate`] recomputes error and cost metrics from the experiment log.

pub mod drift;
pub mod error;
pub mod evaluate;
pub mod horizon;
pub mod regressors;
pub mod scheduler;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
