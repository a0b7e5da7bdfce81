//! Replay exchange format.
//!
//! ```text
//! timestamp,temperature_2m_0_0,cloud_cover_0_0,...
//! 2023-05-12T00:00:00Z,14.2,,...
//! ```
//!
//! The first column is an RFC 3339 timestamp (written in UTC with a `Z`
//! suffix); remaining columns are named `<variable>_<grid_row>_<grid_col>`
//! (or `ref_<variable>` for reference forecasts, `hour_sin`/`hour_cos` for
//! encodings). An empty cell is a missing value. Floats are written in their
//! shortest round-trip representation, so save/load is lossless.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::frame::{one_hour, TimeFrame};
use crate::error::{Error, Result};

pub const TIMESTAMP_COLUMN: &str = "timestamp";

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

pub fn write_replay<W: Write>(frame: &TimeFrame, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = Vec::with_capacity(frame.n_cols() + 1);
    header.push(TIMESTAMP_COLUMN.to_string());
    header.extend(frame.names().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for (r, ts) in frame.timestamps().iter().enumerate() {
        record.clear();
        record.push(format_timestamp(*ts));
        for c in 0..frame.n_cols() {
            let v = frame.value(r, c);
            record.push(if v.is_nan() { String::new() } else { v.to_string() });
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<replay writer>", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("csv", e.to_string())
}

/// Parses the replay format; timestamps must advance by exactly one hour.
pub fn read_replay<R: Read>(reader: R) -> Result<TimeFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    if headers.get(0) != Some(TIMESTAMP_COLUMN) {
        return Err(Error::parse(
            "header column 1",
            format!("expected `{TIMESTAMP_COLUMN}`"),
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(format!("row {line}"), e.to_string()))?;
        let ts_str = rec.get(0).unwrap_or_default();
        let ts = parse_timestamp(ts_str).map_err(|e| {
            Error::parse(format!("row {line}, column {TIMESTAMP_COLUMN}"), format!("`{ts_str}`: {e}"))
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::InvalidData(format!(
                    "row {line}: timestamp {ts_str} does not increase"
                )));
            }
            if ts - prev != one_hour() {
                return Err(Error::InvalidData(format!(
                    "row {line}: timestamp {ts_str} is not one hour after the previous row"
                )));
            }
        }
        timestamps.push(ts);
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(c + 1).unwrap_or_default().trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|e| {
                    Error::parse(format!("row {line}, column {}", names[c]), format!("`{cell}`: {e}"))
                })?
            };
            col.push(v);
        }
    }
    TimeFrame::new(timestamps, names, columns)
}

pub fn save_replay(frame: &TimeFrame, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_replay(frame, std::io::BufWriter::new(file))
}

pub fn load_replay_frame(path: &Path) -> Result<TimeFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_replay(std::io::BufReader::new(file))
}
