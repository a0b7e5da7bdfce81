//! Per-combination state and the hourly tick.

use std::collections::VecDeque;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataConfig, TargetConfig};
use super::energy::{EnergyEvent, EnergyLedger};
use super::log::{RecordBody, Stage, TrainTrigger};
use crate::drift::{build_drift_window, check_drift, DriftConfig};
use crate::error::{Error, Result};
use crate::horizon::{find_variance_horizon, HorizonConfig, HorizonQuery, HorizonResult};
use crate::regressors::{fit, prepare, RegressorSpec, TrainedModel};
use crate::timeseries::{
    drop_incomplete_rows, drop_sparse_features, encode_hour, minmax_fit, minmax_transform, one_hour, variance_filter,
    with_hour_encoding, Layout, TimeFrame,
};

/// Smallest number of training samples a selected window must leave.
pub const MIN_TRAIN_SAMPLES: usize = 24;

pub const REFERENCE_PREFIX: &str = "ref_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainPolicy {
    Hourly,
    DriftTriggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    FullStatic,
    VarianceHorizon,
}

impl RetrainPolicy {
    pub fn label(self) -> &'static str {
        match self {
            RetrainPolicy::Hourly => "hourly",
            RetrainPolicy::DriftTriggered => "drift_triggered",
        }
    }
}

impl WindowPolicy {
    pub fn label(self) -> &'static str {
        match self {
            WindowPolicy::FullStatic => "full_static",
            WindowPolicy::VarianceHorizon => "variance_horizon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicySpec {
    pub retrain: RetrainPolicy,
    pub window: WindowPolicy,
}

impl PolicySpec {
    pub fn all() -> [PolicySpec; 4] {
        let mut out = [PolicySpec {
            retrain: RetrainPolicy::Hourly,
            window: WindowPolicy::FullStatic,
        }; 4];
        let mut i = 0;
        for retrain in [RetrainPolicy::Hourly, RetrainPolicy::DriftTriggered] {
            for window in [WindowPolicy::FullStatic, WindowPolicy::VarianceHorizon] {
                out[i] = PolicySpec { retrain, window };
                i += 1;
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.retrain.label(), self.window.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComboId {
    pub city: String,
    pub target: String,
    pub model: String,
    pub retrain: RetrainPolicy,
    pub window: WindowPolicy,
}

impl ComboId {
    pub fn policy(&self) -> PolicySpec {
        PolicySpec {
            retrain: self.retrain,
            window: self.window,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}/{}", self.city, self.target, self.model, self.policy().label())
    }
}

/// Preprocessed rows of one city. The feature schema is frozen at warm-up;
/// `ref_` columns are kept aside, aligned row for row.
#[derive(Debug, Clone)]
pub struct CityData {
    pub name: String,
    pub features: TimeFrame,
    pub reference: TimeFrame,
    raw_features: Vec<String>,
    hour_encoding: bool,
}

impl CityData {
    pub fn from_history(name: &str, raw: &TimeFrame, data: &DataConfig) -> Result<Self> {
        let (refs, feats): (Vec<String>, Vec<String>) =
            raw.names().iter().cloned().partition(|n| n.starts_with(REFERENCE_PREFIX));
        let frame = raw.select_columns(&feats)?;
        let frame = drop_sparse_features(&frame, data.max_missing)?;
        let frame = drop_incomplete_rows(&frame)?;
        let frame = variance_filter(&frame, data.variance_eps)?;
        let raw_rows: Vec<usize> = frame
            .timestamps()
            .iter()
            .map(|&t| raw.position_of(t).expect("rows come from the raw frame"))
            .collect();
        let reference = raw.select_columns(&refs)?.take_rows(&raw_rows);
        let raw_features = frame.names().to_vec();
        let features = if data.hour_encoding {
            with_hour_encoding(&frame)?
        } else {
            frame
        };
        Ok(Self {
            name: name.to_string(),
            features,
            reference,
            raw_features,
            hour_encoding: data.hour_encoding,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        self.features.last_timestamp()
    }

    /// Appends raw rows; missing feature cells are carried forward and
    /// reported. Rows at or before the current last timestamp are ignored.
    pub fn append(&mut self, rows: &TimeFrame) -> Result<Vec<String>> {
        let mut notes = Vec::new();
        let idx: Vec<usize> = self
            .raw_features
            .iter()
            .map(|n| {
                rows.column_index(n)
                    .ok_or_else(|| Error::SchemaMismatch(format!("new rows lack column `{n}`")))
            })
            .collect::<Result<_>>()?;
        let ref_idx: Vec<Option<usize>> = self.reference.names().iter().map(|n| rows.column_index(n)).collect();
        for r in 0..rows.n_rows() {
            let ts = rows.timestamps()[r];
            if let Some(last) = self.last_timestamp() {
                if ts <= last {
                    continue;
                }
                if ts - last != one_hour() {
                    return Err(Error::InvalidData(format!(
                        "{}: row at {} leaves a gap after {}",
                        self.name,
                        ts.to_rfc3339(),
                        last.to_rfc3339()
                    )));
                }
            }
            let last_row = self.n_rows() - 1;
            let mut values = Vec::with_capacity(self.features.n_cols());
            let mut filled = Vec::new();
            for (k, &c) in idx.iter().enumerate() {
                let v = rows.value(r, c);
                if v.is_nan() {
                    filled.push(self.raw_features[k].clone());
                    values.push(self.features.value(last_row, k));
                } else {
                    values.push(v);
                }
            }
            if !filled.is_empty() {
                notes.push(format!(
                    "{}: carried forward {} missing cell(s) at {}: {}",
                    self.name,
                    filled.len(),
                    ts.to_rfc3339(),
                    filled.join(",")
                ));
            }
            if self.hour_encoding {
                let (s, c) = encode_hour(ts);
                values.push(s);
                values.push(c);
            }
            self.features.push_row(ts, &values)?;
            let refs: Vec<f64> = ref_idx
                .iter()
                .map(|i| i.map(|c| rows.value(r, c)).unwrap_or(f64::NAN))
                .collect();
            self.reference.push_row(ts, &refs)?;
        }
        Ok(notes)
    }
}

/// Hex SHA-256 over timestamps, names and value bits.
pub fn frame_hash(frame: &TimeFrame) -> String {
    let mut h = Sha256::new();
    for n in frame.names() {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    for t in frame.timestamps() {
        h.update(t.timestamp().to_le_bytes());
    }
    for c in frame.columns() {
        for v in c {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowChoice {
    /// Trailing rows used for train + validation.
    pub window_rows: usize,
    pub t_vh: Option<usize>,
}

/// Ψ curve over the trailing rows of `features`, min-max scaled on the
/// candidates plus the reference block.
pub fn variance_horizon_of(features: &TimeFrame, horizon: &HorizonConfig) -> Result<HorizonResult> {
    let candidates = features.tail(horizon.max_window + horizon.horizon_len);
    let scaler = minmax_fit(&candidates)?;
    let scaled = minmax_transform(&candidates, &scaler)?.to_matrix();
    let query = HorizonQuery::from_chronological(scaled.view(), *horizon)?;
    find_variance_horizon(&query)
}

/// Rows the window policy selects from the end of `features`.
pub fn select_window(
    features: &TimeFrame,
    window: WindowPolicy,
    data: &DataConfig,
    horizon: &HorizonConfig,
) -> Result<WindowChoice> {
    let n = features.n_rows();
    let min_rows = data.validation_rows() + data.shape().min_rows() + MIN_TRAIN_SAMPLES - 1;
    if n < min_rows {
        return Err(Error::InsufficientData(format!(
            "{n} rows, a window needs at least {min_rows}"
        )));
    }
    match window {
        WindowPolicy::FullStatic => Ok(WindowChoice {
            window_rows: n.min(data.history_hours.max(min_rows)),
            t_vh: None,
        }),
        WindowPolicy::VarianceHorizon => {
            let result = variance_horizon_of(features, horizon)?;
            Ok(WindowChoice {
                window_rows: result.t_vh.max(min_rows).min(n),
                t_vh: Some(result.t_vh),
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TickContext<'a> {
    pub data: &'a DataConfig,
    pub horizon: &'a HorizonConfig,
    pub drift: &'a DriftConfig,
    pub watts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingForecast {
    pub issued_at: DateTime<Utc>,
    pub issued_row: usize,
    pub physical: Vec<f64>,
}

type Emitted = Vec<(DateTime<Utc>, RecordBody)>;

#[derive(Debug, Clone)]
pub struct ComboState {
    pub id: ComboId,
    pub spec: RegressorSpec,
    pub target: TargetConfig,
    pub model: Option<TrainedModel>,
    pub pending: VecDeque<PendingForecast>,
    pub last_t_vh: Option<usize>,
    pub energy: EnergyLedger,
    pub ticks: usize,
}

impl ComboState {
    pub fn new(id: ComboId, spec: RegressorSpec, target: TargetConfig) -> Self {
        Self {
            id,
            spec,
            target,
            model: None,
            pending: VecDeque::new(),
            last_t_vh: None,
            energy: EnergyLedger::default(),
            ticks: 0,
        }
    }

    fn failure(&self, now: DateTime<Utc>, stage: Stage, e: &Error) -> (DateTime<Utc>, RecordBody) {
        (
            now,
            RecordBody::Failure {
                combo: self.id.clone(),
                stage,
                message: e.to_string(),
            },
        )
    }

    fn energy_record(&mut self, now: DateTime<Utc>, event: EnergyEvent, wall: f64, watts: f64) -> Result<(DateTime<Utc>, RecordBody)> {
        let e = self.energy.record(event, wall, watts)?;
        Ok((
            now,
            RecordBody::Energy {
                combo: self.id.clone(),
                event,
                wall_seconds: e.wall_seconds,
                watts: e.watts,
                wh: e.wh,
            },
        ))
    }

    /// Selects a window, refits and swaps in the new model. On failure the
    /// previous model stays live and a failure record is emitted.
    pub fn retrain(&mut self, city: &CityData, ctx: &TickContext<'_>, trigger: TrainTrigger) -> Emitted {
        let now = city.last_timestamp().expect("city has rows");
        match self.try_retrain(city, ctx, trigger) {
            Ok(records) => records,
            Err(e) => {
                log::warn!("{}: training failed: {e}", self.id.label());
                vec![self.failure(now, Stage::Train, &e)]
            }
        }
    }

    fn try_retrain(&mut self, city: &CityData, ctx: &TickContext<'_>, trigger: TrainTrigger) -> Result<Emitted> {
        let now = city.last_timestamp().expect("city has rows");
        let choice = select_window(&city.features, self.id.window, ctx.data, ctx.horizon)?;
        let window = city.features.tail(choice.window_rows);
        let val_rows = ctx.data.validation_rows();
        let data = prepare(&window, &self.target.column, ctx.data.shape(), Layout::Flat, val_rows)?;
        let model = fit(&self.spec, &data)?;
        let report = model.report.clone();
        let wh = crate::scheduler::energy_of(report.wall_seconds, ctx.watts)?;
        let mut out = vec![(
            now,
            RecordBody::Train {
                combo: self.id.clone(),
                trigger,
                t_vh: choice.t_vh,
                snapshot_rows: city.n_rows(),
                snapshot_hash: frame_hash(&city.features),
                window_rows: choice.window_rows,
                train_rows: choice.window_rows - val_rows,
                val_rows,
                min_val_loss: report.min_val_loss,
                epochs_or_trees: report.epochs_or_trees,
                val_curve: report.val_curve.clone(),
                wall_seconds: report.wall_seconds,
                wh,
            },
        )];
        out.push(self.energy_record(now, EnergyEvent::Train, report.wall_seconds, ctx.watts)?);
        self.last_t_vh = choice.t_vh;
        self.model = Some(model);
        Ok(out)
    }

    fn resolve(&mut self, city: &CityData, horizon: usize) -> Emitted {
        let mut out = Vec::new();
        let last = city.n_rows() - 1;
        let truth_col = city.features.column_index(&self.target.column);
        let ref_col = self
            .target
            .reference
            .as_ref()
            .and_then(|r| city.reference.column_index(r));
        while let Some(p) = self.pending.front() {
            if p.issued_row + horizon > last {
                break;
            }
            let p = self.pending.pop_front().expect("front exists");
            let rows = p.issued_row + 1..=p.issued_row + horizon;
            let truth = match truth_col {
                Some(c) => rows.clone().map(|r| city.features.value(r, c)).collect(),
                None => continue,
            };
            let reference = ref_col.map(|c| rows.map(|r| city.reference.value(r, c)).collect::<Vec<f64>>());
            let reference = reference.filter(|v| v.iter().all(|x| x.is_finite()));
            out.push((
                city.features.timestamps()[p.issued_row + horizon],
                RecordBody::Resolution {
                    combo: self.id.clone(),
                    issued_at: p.issued_at,
                    predicted: p.physical,
                    truth,
                    reference,
                },
            ));
        }
        out
    }

    /// One hourly step after the city's new row has been appended.
    pub fn tick(&mut self, city: &CityData, ctx: &TickContext<'_>) -> Result<Emitted> {
        let now = city.last_timestamp().expect("city has rows");
        let mut out = self.resolve(city, ctx.data.horizon);
        self.ticks += 1;
        match (self.id.retrain, &self.model) {
            (_, None) => out.extend(self.retrain(city, ctx, TrainTrigger::Recover)),
            (RetrainPolicy::Hourly, Some(_)) => out.extend(self.retrain(city, ctx, TrainTrigger::Hourly)),
            (RetrainPolicy::DriftTriggered, Some(model)) => {
                if (self.ticks - 1).is_multiple_of(ctx.drift.check_period_hours) {
                    let start = Instant::now();
                    let checked = build_drift_window(&city.features, ctx.drift, model)
                        .and_then(|w| check_drift(model, &w, ctx.drift));
                    let wall = start.elapsed().as_secs_f64().max(1e-9);
                    match checked {
                        Ok(v) => {
                            out.push((
                                now,
                                RecordBody::Drift {
                                    combo: self.id.clone(),
                                    baseline_loss: v.baseline_loss,
                                    current_loss: v.current_loss,
                                    relative_increase: v.relative_increase,
                                    drifted: v.drifted,
                                },
                            ));
                            out.push(self.energy_record(now, EnergyEvent::DriftCheck, wall, ctx.watts)?);
                            if v.drifted {
                                out.extend(self.retrain(city, ctx, TrainTrigger::Drift));
                            }
                        }
                        Err(e) => out.push(self.failure(now, Stage::Drift, &e)),
                    }
                }
            }
        }
        if let Some(model) = &self.model {
            let start = Instant::now();
            let forecast = model.forecast_latest(&city.features);
            let wall = start.elapsed().as_secs_f64().max(1e-9);
            match forecast {
                Ok(physical) => {
                    let scale = model.scaler.column(&model.target).expect("target is scaled");
                    let scaled = physical.iter().map(|&v| scale.transform(v)).collect();
                    out.push((
                        now,
                        RecordBody::Forecast {
                            combo: self.id.clone(),
                            scaled,
                            physical: physical.clone(),
                        },
                    ));
                    out.push(self.energy_record(now, EnergyEvent::Infer, wall, ctx.watts)?);
                    self.pending.push_back(PendingForecast {
                        issued_at: now,
                        issued_row: city.n_rows() - 1,
                        physical,
                    });
                }
                Err(e) => out.push(self.failure(now, Stage::Forecast, &e)),
            }
        }
        Ok(out)
    }
}
