//! Loss-based drift detection.
//!
//! A fitted model is re-scored on the most recent `window_hours` rows, scaled
//! with the model's own frozen scaler. Drift is declared when that loss rises
//! by at least `loss_increase_threshold` relative to the model's best
//! validation loss.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressors::{mse, predict, TrainedModel};
use crate::timeseries::{make_windows, minmax_transform, TimeFrame, WindowShape, WindowedDataset};

pub const DEFAULT_WINDOW_HOURS: usize = 240;
pub const DEFAULT_LOSS_INCREASE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftConfig {
    pub window_hours: usize,
    pub loss_increase_threshold: f64,
    pub check_period_hours: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            window_hours: DEFAULT_WINDOW_HOURS,
            loss_increase_threshold: DEFAULT_LOSS_INCREASE,
            check_period_hours: 1,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self, shape: WindowShape) -> Result<()> {
        if self.window_hours <= shape.min_rows() {
            return Err(Error::Config(format!(
                "drift window_hours {} must exceed lookback + horizon = {}",
                self.window_hours,
                shape.min_rows()
            )));
        }
        if !(self.loss_increase_threshold > 0.0) {
            return Err(Error::Config("drift loss_increase_threshold must be > 0".into()));
        }
        if self.check_period_hours == 0 {
            return Err(Error::Config("drift check_period_hours must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftVerdict {
    pub checked_at: DateTime<Utc>,
    pub baseline_loss: f64,
    pub current_loss: f64,
    pub relative_increase: f64,
    pub drifted: bool,
}

/// Decision rule. With a zero baseline any positive loss counts as drift.
pub fn verdict(baseline: f64, current: f64, threshold: f64, checked_at: DateTime<Utc>) -> DriftVerdict {
    let (relative_increase, drifted) = if baseline > 0.0 {
        let rel = (current - baseline) / baseline;
        (rel, rel >= threshold)
    } else if current > 0.0 {
        (f64::INFINITY, true)
    } else {
        (0.0, false)
    };
    DriftVerdict {
        checked_at,
        baseline_loss: baseline,
        current_loss: current,
        relative_increase,
        drifted,
    }
}

/// Windows the last `window_hours` rows of `frame` with the model's scaler.
pub fn build_drift_window(frame: &TimeFrame, config: &DriftConfig, model: &TrainedModel) -> Result<WindowedDataset> {
    if frame.n_rows() < config.window_hours {
        return Err(Error::InsufficientData(format!(
            "{} rows, drift window needs {}",
            frame.n_rows(),
            config.window_hours
        )));
    }
    let recent = frame.tail(config.window_hours).select_columns(&model.scaler.names)?;
    let scaled = minmax_transform(&recent, &model.scaler)?;
    make_windows(&scaled, &model.target, model.shape, model.layout)
}

pub fn check_drift(model: &TrainedModel, window: &WindowedDataset, config: &DriftConfig) -> Result<DriftVerdict> {
    let pred = predict(model, window)?;
    let current = mse(pred.view(), window.labels.view())?;
    let checked_at = window
        .sample_timestamps
        .last()
        .map(|&t| t + chrono::Duration::hours(window.shape.horizon as i64))
        .unwrap_or(model.trained_at);
    Ok(verdict(
        model.report.min_val_loss,
        current,
        config.loss_increase_threshold,
        checked_at,
    ))
}
