//! Append-only experiment log, persisted as newline-delimited JSON.
//!
//! Every line is one object with `seq`, `time` (simulated clock, RFC 3339),
//! a `kind` discriminator and kind-specific fields:
//!
//! | kind         | fields                                                                 |
//! |--------------|------------------------------------------------------------------------|
//! | `train`      | combo, trigger, t_vh, snapshot_rows, snapshot_hash, window_rows, train_rows, val_rows, min_val_loss, epochs_or_trees, val_curve, wall_seconds, wh |
//! | `failure`    | combo, stage, message                                                   |
//! | `forecast`   | combo, scaled, physical                                                 |
//! | `resolution` | combo, issued_at, predicted, truth, reference                           |
//! | `drift`      | combo, baseline_loss, current_loss, relative_increase, drifted          |
//! | `energy`     | combo, event, wall_seconds, watts, wh                                   |
//! | `gap`        | city, message                                                           |

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::energy::EnergyEvent;
use super::policy::ComboId;
use crate::error::{Error, Result};

/// Fields that depend on measured compute time.
pub const WALL_TIME_FIELDS: [&str; 2] = ["wall_seconds", "wh"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainTrigger {
    Initial,
    Hourly,
    Drift,
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Train,
    Drift,
    Forecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    Train {
        combo: ComboId,
        trigger: TrainTrigger,
        t_vh: Option<usize>,
        snapshot_rows: usize,
        snapshot_hash: String,
        window_rows: usize,
        train_rows: usize,
        val_rows: usize,
        min_val_loss: f64,
        epochs_or_trees: usize,
        val_curve: Vec<f64>,
        wall_seconds: f64,
        wh: f64,
    },
    Failure {
        combo: ComboId,
        stage: Stage,
        message: String,
    },
    Forecast {
        combo: ComboId,
        scaled: Vec<f64>,
        physical: Vec<f64>,
    },
    Resolution {
        combo: ComboId,
        issued_at: DateTime<Utc>,
        predicted: Vec<f64>,
        truth: Vec<f64>,
        reference: Option<Vec<f64>>,
    },
    Drift {
        combo: ComboId,
        baseline_loss: f64,
        current_loss: f64,
        relative_increase: f64,
        drifted: bool,
    },
    Energy {
        combo: ComboId,
        event: EnergyEvent,
        wall_seconds: f64,
        watts: f64,
        wh: f64,
    },
    Gap {
        city: String,
        message: String,
    },
}

impl RecordBody {
    pub fn combo(&self) -> Option<&ComboId> {
        match self {
            RecordBody::Train { combo, .. }
            | RecordBody::Failure { combo, .. }
            | RecordBody::Forecast { combo, .. }
            | RecordBody::Resolution { combo, .. }
            | RecordBody::Drift { combo, .. }
            | RecordBody::Energy { combo, .. } => Some(combo),
            RecordBody::Gap { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub time: DateTime<Utc>,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentLog {
    pub records: Vec<LogRecord>,
}

impl ExperimentLog {
    pub fn push(&mut self, time: DateTime<Utc>, body: RecordBody) {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { seq, time, body });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::InvalidData(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::io("<log writer>", e))?;
        }
        w.flush().map_err(|e| Error::io("<log writer>", e))
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_ndjson(std::io::BufWriter::new(file))
    }

    pub fn read_ndjson<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<log reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(format!("log line {}", i + 1), e.to_string()))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_ndjson(std::io::BufReader::new(file))
    }

    /// NDJSON with `wall_seconds`/`wh` removed everywhere, for comparing runs.
    pub fn canonical_without_wall_time(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mut v = serde_json::to_value(r).expect("serializable");
            strip_fields(&mut v, &WALL_TIME_FIELDS);
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn combos(&self) -> Vec<ComboId> {
        let mut seen: Vec<ComboId> = Vec::new();
        for r in &self.records {
            if let Some(c) = r.body.combo() {
                if !seen.contains(c) {
                    seen.push(c.clone());
                }
            }
        }
        seen
    }

    pub fn for_combo<'a>(&'a self, combo: &'a ComboId) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.body.combo() == Some(combo))
    }
}

fn strip_fields(v: &mut serde_json::Value, fields: &[&str]) {
    match v {
        serde_json::Value::Object(map) => {
            for f in fields {
                map.remove(*f);
            }
            for child in map.values_mut() {
                strip_fields(child, fields);
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|c| strip_fields(c, fields)),
        _ => {}
    }
}
