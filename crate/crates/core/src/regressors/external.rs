//! Predictions produced by an outside model, replayed from a CSV file.
//!
//! ```text
//! timestamp,h1,h2,h3,h4,h5,h6
//! 2023-05-20T11:00:00Z,0.41,0.43,0.44,0.47,0.49,0.50
//! ```
//!
//! `timestamp` is the sample timestamp (last look-back hour) and `h1..hH` are
//! scaled predictions for the following hours.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Error, Result};
use crate::timeseries::{format_timestamp, parse_timestamp, TIMESTAMP_COLUMN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalParams {
    pub path: PathBuf,
}

impl ExternalParams {
    pub fn validate(&self) -> Result<()> {
        if self.path.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("external predictions need a path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalPredictions {
    pub horizon: usize,
    pub rows: BTreeMap<DateTime<Utc>, Vec<f64>>,
}

impl Regressor for ExternalPredictions {
    fn input_width(&self) -> Option<usize> {
        None
    }

    fn predict_scaled(&self, _: ArrayView2<'_, f64>, timestamps: &[DateTime<Utc>]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((timestamps.len(), self.horizon));
        for (i, ts) in timestamps.iter().enumerate() {
            let row = self.rows.get(ts).ok_or_else(|| {
                Error::NotAvailable(format!("no external prediction for {}", format_timestamp(*ts)))
            })?;
            for (h, &v) in row.iter().enumerate() {
                out[[i, h]] = v;
            }
        }
        Ok(out)
    }
}

pub fn load_external_predictions(path: &Path) -> Result<ExternalPredictions> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    if headers.get(0) != Some(TIMESTAMP_COLUMN) || headers.len() < 2 {
        return Err(Error::parse("header", "expected `timestamp,h1,...`"));
    }
    let horizon = headers.len() - 1;
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(format!("row {line}"), e.to_string()))?;
        let ts = parse_timestamp(&rec[0])
            .map_err(|e| Error::parse(format!("row {line}, column timestamp"), e.to_string()))?;
        let values = (1..=horizon)
            .map(|c| {
                rec[c].trim().parse::<f64>().map_err(|e| {
                    Error::parse(format!("row {line}, column {}", &headers[c]), e.to_string())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.insert(ts, values);
    }
    Ok(ExternalPredictions { horizon, rows })
}

pub fn write_external_predictions(path: &Path, timestamps: &[DateTime<Utc>], preds: ArrayView2<'_, f64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec![TIMESTAMP_COLUMN.to_string()];
    header.extend((1..=preds.ncols()).map(|h| format!("h{h}")));
    let csv_err = |e: csv::Error| Error::parse("external csv", e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (ts, row) in timestamps.iter().zip(preds.rows()) {
        let mut rec = vec![format_timestamp(*ts)];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{fit, predict, prepare, Hyperparameters, RegressorSpec};
    use crate::timeseries::{Layout, WindowShape};

    #[test]
    fn external_replays_file_predictions() {
        let frame = crate::regressors::tests::ramp_frame(200);
        let data = prepare(&frame, "y", WindowShape::default(), Layout::Flat, 48).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        // a perfect outside model
        write_external_predictions(&path, &data.val.sample_timestamps, data.val.labels.view()).unwrap();
        let spec = RegressorSpec {
            params: Hyperparameters::External(ExternalParams { path: path.clone() }),
            seed: 0,
        };
        let model = fit(&spec, &data).unwrap();
        assert_eq!(model.report.min_val_loss, 0.0);
        assert_eq!(predict(&model, &data.val).unwrap(), data.val.labels);
        assert!(matches!(predict(&model, &data.train), Err(Error::NotAvailable(_))));
    }
}
