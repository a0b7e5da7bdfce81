//! Regressor kinds behind one fit/predict surface.
//!
//! Every kind maps a time-major flat input block to the full label horizon in
//! scaled space. [`prepare`] turns a filtered frame into scaled train and
//! validation windows; [`fit`] trains a [`TrainedModel`] that carries its own
//! scaler so forecasts can be mapped back to physical units.

mod external;
mod gbt;
mod mlp;
mod persist;

use std::time::Instant;

use chrono::{DateTime, Utc};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{
    latest_input, make_windows, minmax_fit, minmax_transform, Layout, ScalerParams, TimeFrame,
    WindowShape, WindowedDataset,
};

pub use external::{load_external_predictions, write_external_predictions, ExternalParams, ExternalPredictions};
pub use gbt::{
    fit_gbt, leaf_weight, soft_threshold, split_gain, GbtModel, GbtParams, Tree, TreeNode,
};
pub use mlp::{fit_mlp, Dense, MlpModel, MlpParams, MlpTraining, MIN_LEARNING_RATE};
pub use persist::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Gbt(GbtParams),
    Mlp(MlpParams),
    External(ExternalParams),
}

impl Hyperparameters {
    pub fn kind(&self) -> &'static str {
        match self {
            Hyperparameters::Gbt(_) => "gbt",
            Hyperparameters::Mlp(_) => "mlp",
            Hyperparameters::External(_) => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub params: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl RegressorSpec {
    pub fn gbt(params: GbtParams) -> Self {
        Self {
            params: Hyperparameters::Gbt(params),
            seed: 0,
        }
    }

    pub fn mlp(params: MlpParams, seed: u64) -> Self {
        Self {
            params: Hyperparameters::Mlp(params),
            seed,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.params.kind()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            Hyperparameters::Gbt(p) => p.validate(),
            Hyperparameters::Mlp(p) => p.validate(),
            Hyperparameters::External(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Best validation MSE on scaled labels.
    pub min_val_loss: f64,
    pub wall_seconds: f64,
    pub epochs_or_trees: usize,
    /// Validation MSE per epoch (MLP) or of the final ensemble (GBT, external).
    pub val_curve: Vec<f64>,
}

/// Anything that maps scaled inputs to scaled `[n × horizon]` labels.
pub trait Regressor {
    /// `None` when the regressor does not constrain the width.
    fn input_width(&self) -> Option<usize>;

    fn predict_scaled(&self, inputs: ArrayView2<'_, f64>, timestamps: &[DateTime<Utc>]) -> Result<Array2<f64>>;
}

impl Regressor for GbtModel {
    fn input_width(&self) -> Option<usize> {
        Some(self.input_width)
    }

    fn predict_scaled(&self, inputs: ArrayView2<'_, f64>, _: &[DateTime<Utc>]) -> Result<Array2<f64>> {
        Ok(self.predict(inputs))
    }
}

impl Regressor for MlpModel {
    fn input_width(&self) -> Option<usize> {
        Some(MlpModel::input_width(self))
    }

    fn predict_scaled(&self, inputs: ArrayView2<'_, f64>, _: &[DateTime<Utc>]) -> Result<Array2<f64>> {
        Ok(self.predict(inputs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Gbt(GbtModel),
    Mlp(MlpModel),
    External(ExternalPredictions),
}

impl ModelState {
    fn as_regressor(&self) -> &dyn Regressor {
        match self {
            ModelState::Gbt(m) => m,
            ModelState::Mlp(m) => m,
            ModelState::External(m) => m,
        }
    }
}

/// Scaled train/validation windows plus the scaler fitted on training rows.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub scaler: ScalerParams,
    pub target: String,
    pub as_of: DateTime<Utc>,
}

/// Scales and windows a complete, contiguous frame.
///
/// The last `validation_rows` rows are held out: the scaler is fitted on the
/// rows before them, training samples have every label before the cut and
/// validation samples have every label after it (look-back blocks may reach
/// back into the training span).
pub fn prepare(
    frame: &TimeFrame,
    target: &str,
    shape: WindowShape,
    layout: Layout,
    validation_rows: usize,
) -> Result<PreparedData> {
    let n = frame.n_rows();
    if validation_rows < shape.horizon || n <= validation_rows {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot hold a {validation_rows}-row validation span"
        )));
    }
    let cut = n - validation_rows;
    let scaler = minmax_fit(&frame.slice_rows(0..cut))?;
    let scaled = minmax_transform(frame, &scaler)?;
    let all = make_windows(&scaled, target, shape, layout)?;
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for k in 0..all.n_samples() {
        let first_label = k + shape.lookback;
        let last_label = first_label + shape.horizon - 1;
        if last_label < cut {
            train_idx.push(k);
        } else if first_label >= cut {
            val_idx.push(k);
        }
    }
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} training and {} validation samples from {n} rows",
            train_idx.len(),
            val_idx.len()
        )));
    }
    Ok(PreparedData {
        train: all.select(&train_idx),
        val: all.select(&val_idx),
        scaler,
        target: target.to_string(),
        as_of: frame.last_timestamp().expect("non-empty frame"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: RegressorSpec,
    pub scaler: ScalerParams,
    pub target: String,
    pub shape: WindowShape,
    pub layout: Layout,
    pub n_features: usize,
    pub trained_at: DateTime<Utc>,
    pub report: TrainReport,
    pub state: ModelState,
}

impl TrainedModel {
    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn input_width(&self) -> usize {
        self.shape.lookback * self.n_features
    }

    /// Forecast in physical units from the most recent look-back block.
    /// Columns are picked by the scaler's names, so extra columns are ignored.
    pub fn forecast_latest(&self, frame: &TimeFrame) -> Result<Vec<f64>> {
        let cols = frame.tail(self.shape.lookback).select_columns(&self.scaler.names)?;
        let scaled = minmax_transform(&cols, &self.scaler)?;
        let block = latest_input(&scaled, self.shape, self.layout)?;
        let pred = predict(self, &block)?;
        let scale = self
            .scaler
            .column(&self.target)
            .ok_or_else(|| Error::SchemaMismatch(format!("scaler lacks target `{}`", self.target)))?;
        Ok(pred.row(0).iter().map(|&s| scale.inverse(s)).collect())
    }
}

fn check_finite(ds: &WindowedDataset, what: &str) -> Result<()> {
    if ds.inputs.iter().chain(ds.labels.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("{what} contains NaN or infinite values")));
    }
    Ok(())
}

/// Trains one model on prepared data.
pub fn fit(spec: &RegressorSpec, data: &PreparedData) -> Result<TrainedModel> {
    let (state, report) = fit_datasets(spec, &data.train, &data.val)?;
    Ok(TrainedModel {
        spec: spec.clone(),
        scaler: data.scaler.clone(),
        target: data.target.clone(),
        shape: data.train.shape,
        layout: data.train.layout,
        n_features: data.train.n_features,
        trained_at: data.as_of,
        report,
        state,
    })
}

/// Kind dispatch on already-scaled windows.
pub fn fit_datasets(
    spec: &RegressorSpec,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<(ModelState, TrainReport)> {
    spec.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("empty training or validation set".into()));
    }
    if train.input_width() != val.input_width() || train.horizon() != val.horizon() || train.layout != val.layout {
        return Err(Error::SchemaMismatch(format!(
            "train [{} → {}] vs validation [{} → {}]",
            train.input_width(),
            train.horizon(),
            val.input_width(),
            val.horizon()
        )));
    }
    check_finite(train, "training set")?;
    check_finite(val, "validation set")?;
    let start = Instant::now();
    let (state, epochs_or_trees, val_curve) = match &spec.params {
        Hyperparameters::Gbt(p) => {
            let model = fit_gbt(train.inputs.view(), train.labels.view(), p)?;
            let loss = mse(model.predict(val.inputs.view()).view(), val.labels.view())?;
            (ModelState::Gbt(model), p.n_trees, vec![loss])
        }
        Hyperparameters::Mlp(p) => {
            let t = fit_mlp(
                train.inputs.view(),
                train.labels.view(),
                val.inputs.view(),
                val.labels.view(),
                p,
                spec.seed,
            )?;
            (ModelState::Mlp(t.model), t.epochs, t.val_curve)
        }
        Hyperparameters::External(p) => {
            let preds = load_external_predictions(&p.path)?;
            let pred = preds.predict_scaled(val.inputs.view(), &val.sample_timestamps)?;
            let loss = mse(pred.view(), val.labels.view())?;
            (ModelState::External(preds), 0, vec![loss])
        }
    };
    let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
    let min_val_loss = val_curve.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        state,
        TrainReport {
            min_val_loss,
            wall_seconds,
            epochs_or_trees,
            val_curve,
        },
    ))
}

/// Scaled-space prediction, `[n × horizon]`.
pub fn predict(model: &TrainedModel, inputs: &WindowedDataset) -> Result<Array2<f64>> {
    let reg = model.state.as_regressor();
    let expected = reg.input_width().unwrap_or(model.input_width());
    if inputs.input_width() != expected {
        return Err(Error::SchemaMismatch(format!(
            "input width {} but model expects {expected}",
            inputs.input_width()
        )));
    }
    let out = reg.predict_scaled(inputs.inputs.view(), &inputs.sample_timestamps)?;
    debug_assert_eq!(out.ncols(), model.horizon());
    Ok(out)
}

pub fn mse(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::SchemaMismatch(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("mse of empty matrices".into()));
    }
    let sum: f64 = pred.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}
