//! TOML experiment configuration.
//!
//! ```toml
//! [data]
//! validation_days = 10
//!
//! [cities.boston]
//! replay = "boston.csv"          # relative to the config file
//!
//! [targets.temperature]
//! column = "temperature_2m_3_3"
//! reference = "ref_temperature_2m"
//!
//! [models.xgb]
//! kind = "gbt"
//! n_trees = 40
//!
//! [policies]
//! retrain = ["hourly", "drift_triggered"]
//! window = ["full_static", "variance_horizon"]
//!
//! [clock]
//! mode = "replay"
//! warmup_hours = 3840
//!
//! [energy]
//! watts = 200.0
//! ```
//!
//! `[variance_horizon]`, `[drift]` and `[evaluate]` override the selector,
//! drift-detector and bootstrap defaults; `[source]` configures the HTTP
//! client.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::energy::DEFAULT_WATTS;
use super::policy::{RetrainPolicy, WindowPolicy};
use crate::drift::DriftConfig;
use crate::error::{Error, Result};
use crate::evaluate::BootstrapConfig;
use crate::horizon::HorizonConfig;
use crate::regressors::{Hyperparameters, RegressorSpec};
use crate::timeseries::{
    WindowShape, DEFAULT_HORIZON, DEFAULT_LOOKBACK, DEFAULT_MAX_MISSING, DEFAULT_VALIDATION_DAYS,
    DEFAULT_VARIANCE_EPS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub validation_days: usize,
    pub max_missing: usize,
    pub variance_eps: f64,
    /// Candidate rows for the full static window.
    pub history_hours: usize,
    pub hour_encoding: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            lookback: DEFAULT_LOOKBACK,
            horizon: DEFAULT_HORIZON,
            validation_days: DEFAULT_VALIDATION_DAYS,
            max_missing: DEFAULT_MAX_MISSING,
            variance_eps: DEFAULT_VARIANCE_EPS,
            history_hours: 3600,
            hour_encoding: true,
        }
    }
}

impl DataConfig {
    pub fn shape(&self) -> WindowShape {
        WindowShape {
            lookback: self.lookback,
            horizon: self.horizon,
        }
    }

    pub fn validation_rows(&self) -> usize {
        self.validation_days * 24
    }
}

/// One location: a replay file, or coordinates for the live client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityConfig {
    pub replay: Option<PathBuf>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub span_km: f64,
    pub points_per_side: usize,
    /// Base variables to fetch; empty means the client's default list.
    pub variables: Vec<String>,
    /// Variables whose reference forecast is stored as `ref_<variable>`.
    pub reference_variables: Vec<String>,
    pub history_days: usize,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            replay: None,
            latitude: None,
            longitude: None,
            span_km: 300.0,
            points_per_side: 7,
            variables: Vec::new(),
            reference_variables: Vec::new(),
            history_days: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub column: String,
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyGrid {
    pub retrain: Vec<RetrainPolicy>,
    pub window: Vec<WindowPolicy>,
}

impl Default for PolicyGrid {
    fn default() -> Self {
        Self {
            retrain: vec![RetrainPolicy::Hourly, RetrainPolicy::DriftTriggered],
            window: vec![WindowPolicy::FullStatic, WindowPolicy::VarianceHorizon],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Replay,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    pub mode: ClockMode,
    /// Rows loaded before the first tick. Replay default: all rows but `ticks`.
    pub warmup_hours: Option<usize>,
    /// Number of hourly ticks; `None` runs to the end of the replay.
    pub ticks: Option<usize>,
    pub poll_seconds: u64,
    pub max_retries: u32,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self {
            mode: ClockMode::Replay,
            warmup_hours: None,
            ticks: None,
            poll_seconds: 3600,
            max_retries: 3,
        }
    }
}

/// HTTP source settings for `fetch` and live runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub api_base: String,
    pub reference_api_base: Option<String>,
    /// Upstream model selection, sent as `models=`.
    pub source_tag: String,
    pub concurrency: usize,
    pub min_request_interval_ms: u64,
    pub timeout_seconds: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            api_base: "https://api.open-meteo.com/v1/forecast".into(),
            reference_api_base: None,
            source_tag: "gfs_seamless".into(),
            concurrency: 4,
            min_request_interval_ms: 100,
            timeout_seconds: 60,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub watts: f64,
    /// Worker threads for per-combination work.
    pub workers: usize,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            watts: DEFAULT_WATTS,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub variance_horizon: HorizonConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub evaluate: BootstrapConfig,
    pub cities: BTreeMap<String, CityConfig>,
    pub targets: BTreeMap<String, TargetConfig>,
    pub models: BTreeMap<String, RegressorSpec>,
    #[serde(default)]
    pub policies: PolicyGrid,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub source: SourceConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &self.source.cache_dir {
            if p.is_relative() {
                self.source.cache_dir = Some(base.join(p));
            }
        }
        for city in self.cities.values_mut() {
            if let Some(p) = &city.replay {
                if p.is_relative() {
                    city.replay = Some(base.join(p));
                }
            }
        }
        for spec in self.models.values_mut() {
            if let Hyperparameters::External(ext) = &mut spec.params {
                if ext.path.is_relative() {
                    ext.path = base.join(&ext.path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.data.shape();
        if shape.lookback == 0 || shape.horizon == 0 {
            return Err(Error::Config("lookback and horizon must be >= 1".into()));
        }
        if self.data.validation_rows() < shape.horizon {
            return Err(Error::Config("validation span shorter than the horizon".into()));
        }
        if self.cities.is_empty() || self.targets.is_empty() || self.models.is_empty() {
            return Err(Error::Config("need at least one city, target and model".into()));
        }
        if self.policies.retrain.is_empty() || self.policies.window.is_empty() {
            return Err(Error::Config("policy grid is empty".into()));
        }
        if self.variance_horizon.horizon_len != shape.horizon {
            log::warn!(
                "variance_horizon.horizon_len {} differs from data.horizon {}",
                self.variance_horizon.horizon_len,
                shape.horizon
            );
        }
        self.variance_horizon
            .validate()
            .map_err(|e| Error::Config(format!("[variance_horizon] {e}")))?;
        self.drift.validate(shape)?;
        self.evaluate.validate()?;
        for (name, spec) in &self.models {
            spec.validate().map_err(|e| Error::Config(format!("[models.{name}] {e}")))?;
        }
        if !(self.energy.watts >= 0.0) || self.energy.workers == 0 {
            return Err(Error::Config("[energy] needs watts >= 0 and workers >= 1".into()));
        }
        if self.clock.mode == ClockMode::Replay {
            for (name, city) in &self.cities {
                if city.replay.is_none() {
                    return Err(Error::Config(format!("[cities.{name}] replay mode needs a `replay` path")));
                }
            }
        }
        Ok(())
    }

    pub fn combination_count(&self) -> usize {
        self.cities.len() * self.targets.len() * self.models.len() * self.policies.retrain.len() * self.policies.window.len()
    }
}
