use std::f64::consts::PI;

use chrono::{DateTime, Timelike, Utc};

use super::frame::{one_hour, TimeFrame};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_MISSING: usize = 40;
pub const DEFAULT_VARIANCE_EPS: f64 = 1e-12;
pub const DEFAULT_VALIDATION_DAYS: usize = 10;

pub const HOUR_SIN: &str = "hour_sin";
pub const HOUR_COS: &str = "hour_cos";

/// Drops every column with more than `max_missing` missing cells.
pub fn drop_sparse_features(frame: &TimeFrame, max_missing: usize) -> Result<TimeFrame> {
    let keep: Vec<usize> = (0..frame.n_cols())
        .filter(|&c| frame.missing_count(c) <= max_missing)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFrame("dropping sparse features"));
    }
    Ok(frame.select_indices(&keep))
}

/// Removes rows with any missing cell, then keeps only the trailing run of
/// rows that are exactly one hour apart.
pub fn drop_incomplete_rows(frame: &TimeFrame) -> Result<TimeFrame> {
    let complete: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| frame.row_is_complete(r))
        .collect();
    let Some(&last) = complete.last() else {
        return Err(Error::EmptyFrame("dropping incomplete rows"));
    };
    let ts = frame.timestamps();
    let mut start = complete.len() - 1;
    let mut prev = last;
    while start > 0 {
        let candidate = complete[start - 1];
        if ts[prev] - ts[candidate] != one_hour() {
            break;
        }
        start -= 1;
        prev = candidate;
    }
    let rows = &complete[start..];
    if rows.len() == frame.n_rows() {
        return Ok(frame.clone());
    }
    Ok(frame.take_rows(rows))
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Drops columns whose population variance is `<= eps`.
pub fn variance_filter(frame: &TimeFrame, eps: f64) -> Result<TimeFrame> {
    if frame.has_missing() {
        return Err(Error::InvalidData(
            "variance filter requires a frame without missing cells".into(),
        ));
    }
    let keep: Vec<usize> = (0..frame.n_cols())
        .filter(|&c| population_variance(frame.column_at(c)) > eps)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFrame("variance filtering"));
    }
    Ok(frame.select_indices(&keep))
}

/// `(sin, cos)` of the UTC hour-of-day angle.
pub fn encode_hour(timestamp: DateTime<Utc>) -> (f64, f64) {
    let hour = timestamp.hour() as f64
        + timestamp.minute() as f64 / 60.0
        + timestamp.second() as f64 / 3600.0;
    let angle = 2.0 * PI * hour / 24.0;
    (angle.sin(), angle.cos())
}

/// Appends `hour_sin` / `hour_cos` columns.
pub fn with_hour_encoding(frame: &TimeFrame) -> Result<TimeFrame> {
    let (sin, cos): (Vec<f64>, Vec<f64>) = frame.timestamps().iter().map(|&t| encode_hour(t)).unzip();
    let mut out = frame.clone();
    out.push_column(HOUR_SIN, sin)?;
    out.push_column(HOUR_COS, cos)?;
    Ok(out)
}

/// Splits off the last `validation_days * 24` rows for validation.
pub fn split_train_validation(
    frame: &TimeFrame,
    validation_days: usize,
) -> Result<(TimeFrame, TimeFrame)> {
    split_at_validation_rows(frame, validation_days * 24)
}

pub fn split_at_validation_rows(
    frame: &TimeFrame,
    validation_rows: usize,
) -> Result<(TimeFrame, TimeFrame)> {
    let n = frame.n_rows();
    if n <= validation_rows {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot hold a {validation_rows}-row validation span plus training rows"
        )));
    }
    let cut = n - validation_rows;
    Ok((frame.slice_rows(0..cut), frame.slice_rows(cut..n)))
}
