use serde::{Deserialize, Serialize};

use super::frame::TimeFrame;
use crate::error::{Error, Result};

/// Per-column min/max fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Affine map of a single column; a degenerate column (`max == min`) maps to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

impl ColumnScale {
    pub fn transform(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            (v - self.min) / range
        } else {
            0.0
        }
    }

    pub fn inverse(&self, s: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            s * range + self.min
        } else {
            self.min
        }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

impl ScalerParams {
    pub fn column(&self, name: &str) -> Option<ColumnScale> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.scale_at(i))
    }

    pub fn scale_at(&self, idx: usize) -> ColumnScale {
        ColumnScale {
            min: self.min[idx],
            max: self.max[idx],
        }
    }

    fn check_schema(&self, frame: &TimeFrame) -> Result<()> {
        if frame.names() != self.names.as_slice() {
            return Err(Error::SchemaMismatch(format!(
                "scaler columns {:?} do not match frame columns {:?}",
                abbreviate(&self.names),
                abbreviate(frame.names())
            )));
        }
        Ok(())
    }
}

fn abbreviate(names: &[String]) -> String {
    if names.len() <= 6 {
        names.join(",")
    } else {
        format!("{},...({} total)", names[..6].join(","), names.len())
    }
}

pub fn minmax_fit(frame: &TimeFrame) -> Result<ScalerParams> {
    if frame.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot fit a scaler on zero rows".into()));
    }
    let mut min = Vec::with_capacity(frame.n_cols());
    let mut max = Vec::with_capacity(frame.n_cols());
    for (name, col) in frame.names().iter().zip(frame.columns()) {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !lo.is_finite() || !hi.is_finite() || col.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidData(format!(
                "column `{name}` has missing or non-finite values"
            )));
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(ScalerParams {
        names: frame.names().to_vec(),
        min,
        max,
    })
}

fn map_columns(
    frame: &TimeFrame,
    params: &ScalerParams,
    f: impl Fn(ColumnScale, f64) -> f64,
) -> Result<TimeFrame> {
    params.check_schema(frame)?;
    let columns = frame
        .columns()
        .iter()
        .enumerate()
        .map(|(i, col)| {
            let s = params.scale_at(i);
            col.iter().map(|&v| f(s, v)).collect()
        })
        .collect();
    Ok(TimeFrame::from_parts_unchecked(
        frame.timestamps().to_vec(),
        frame.names().to_vec(),
        columns,
    ))
}

/// `v -> (v - min) / (max - min)`; values outside the fit range extrapolate.
pub fn minmax_transform(frame: &TimeFrame, params: &ScalerParams) -> Result<TimeFrame> {
    map_columns(frame, params, |s, v| s.transform(v))
}

pub fn minmax_inverse(frame: &TimeFrame, params: &ScalerParams) -> Result<TimeFrame> {
    map_columns(frame, params, |s, v| s.inverse(v))
}
