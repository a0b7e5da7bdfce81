use chrono::{DateTime, Utc};
use ndarray::{Array2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::frame::TimeFrame;
use crate::error::{Error, Result};

pub const DEFAULT_LOOKBACK: usize = 24;
pub const DEFAULT_HORIZON: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `[samples × lookback × features]`
    Sequence,
    /// `[samples × lookback·features]`, time-major.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    pub lookback: usize,
    pub horizon: usize,
}

impl Default for WindowShape {
    fn default() -> Self {
        Self {
            lookback: DEFAULT_LOOKBACK,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl WindowShape {
    pub fn min_rows(&self) -> usize {
        self.lookback + self.horizon
    }

    pub fn n_samples(&self, rows: usize) -> usize {
        (rows + 1).saturating_sub(self.min_rows())
    }
}

/// Supervised samples cut from a frame.
///
/// Inputs are always stored as a time-major `[samples × lookback·features]`
/// matrix; [`WindowedDataset::sequence_view`] exposes the same buffer as
/// `[samples × lookback × features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Array2<f64>,
    pub labels: Array2<f64>,
    /// Timestamp of the last look-back row of each sample.
    pub sample_timestamps: Vec<DateTime<Utc>>,
    pub shape: WindowShape,
    pub n_features: usize,
    pub layout: Layout,
}

impl WindowedDataset {
    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.labels.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples() == 0
    }

    pub fn sequence_view(&self) -> ArrayView3<'_, f64> {
        self.inputs
            .view()
            .into_shape_with_order((self.n_samples(), self.shape.lookback, self.n_features))
            .expect("inputs are contiguous time-major rows")
    }

    /// Keeps samples at the given indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            sample_timestamps: indices.iter().map(|&i| self.sample_timestamps[i]).collect(),
            shape: self.shape,
            n_features: self.n_features,
            layout: self.layout,
        }
    }
}

/// Cuts every `(lookback, horizon)` window from a complete, hourly-contiguous
/// frame. All columns are inputs; `target` supplies the labels.
pub fn make_windows(
    frame: &TimeFrame,
    target: &str,
    shape: WindowShape,
    layout: Layout,
) -> Result<WindowedDataset> {
    if shape.lookback == 0 || shape.horizon == 0 {
        return Err(Error::InvalidArgument(
            "lookback and horizon must be >= 1".into(),
        ));
    }
    let target_idx = frame
        .column_index(target)
        .ok_or_else(|| Error::SchemaMismatch(format!("no target column `{target}`")))?;
    let rows = frame.n_rows();
    if rows < shape.min_rows() {
        return Err(Error::InsufficientData(format!(
            "{rows} rows, need at least {} (lookback {} + horizon {})",
            shape.min_rows(),
            shape.lookback,
            shape.horizon
        )));
    }
    if frame.has_missing() {
        return Err(Error::InvalidData("windowing requires a complete frame".into()));
    }
    if !frame.is_hourly_contiguous() {
        return Err(Error::InvalidData(
            "windowing requires hourly-contiguous timestamps".into(),
        ));
    }
    let n_features = frame.n_cols();
    let n_samples = shape.n_samples(rows);
    let width = shape.lookback * n_features;
    let matrix = frame.to_matrix();
    let mut inputs = Array2::zeros((n_samples, width));
    let mut labels = Array2::zeros((n_samples, shape.horizon));
    let target_col = frame.column_at(target_idx);
    let ts = frame.timestamps();
    let mut sample_timestamps = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let mut row = inputs.row_mut(k);
        let src = matrix.slice(ndarray::s![k..k + shape.lookback, ..]);
        for (dst, &v) in row.iter_mut().zip(src.iter()) {
            *dst = v;
        }
        for h in 0..shape.horizon {
            labels[[k, h]] = target_col[k + shape.lookback + h];
        }
        sample_timestamps.push(ts[k + shape.lookback - 1]);
    }
    Ok(WindowedDataset {
        inputs,
        labels,
        sample_timestamps,
        shape,
        n_features,
        layout,
    })
}

/// The single most recent look-back block, for issuing a forecast.
pub fn latest_input(frame: &TimeFrame, shape: WindowShape, layout: Layout) -> Result<WindowedDataset> {
    let rows = frame.n_rows();
    if rows < shape.lookback {
        return Err(Error::InsufficientData(format!(
            "{rows} rows, need {} for a look-back block",
            shape.lookback
        )));
    }
    let block = frame.tail(shape.lookback);
    if block.has_missing() || !block.is_hourly_contiguous() {
        return Err(Error::InvalidData(
            "latest look-back block is incomplete".into(),
        ));
    }
    let n_features = frame.n_cols();
    let flat = block.to_matrix().into_shape_with_order((1, shape.lookback * n_features)).expect("contiguous");
    Ok(WindowedDataset {
        inputs: flat,
        labels: Array2::zeros((1, 0)),
        sample_timestamps: vec![block.last_timestamp().expect("non-empty")],
        shape,
        n_features,
        layout,
    })
}
