//! Hourly experiment loop over every (city, target, model, policy)
//! combination.
//!
//! A coordinator owns the clock and the per-city frames. Each tick it appends
//! one row per city, then runs every combination against that shared snapshot
//! on a bounded worker pool and appends the emitted records to the log in
//! enumeration order, so replays are deterministic regardless of scheduling.

mod config;
mod energy;
mod log;
mod policy;
mod source;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use self::config::{
    CityConfig, ClockConfig, ClockMode, DataConfig, EnergyConfig, ExperimentConfig, PolicyGrid, SourceConfig,
    TargetConfig,
};
pub use self::energy::{energy_of, EnergyEntry, EnergyEvent, EnergyLedger, DEFAULT_WATTS};
pub use self::log::{ExperimentLog, LogRecord, RecordBody, Stage, TrainTrigger, WALL_TIME_FIELDS};
pub use self::policy::{
    frame_hash, select_window, variance_horizon_of, CityData, ComboId, ComboState, PendingForecast, PolicySpec, RetrainPolicy,
    TickContext, WindowChoice, WindowPolicy, MIN_TRAIN_SAMPLES, REFERENCE_PREFIX,
};
pub use self::source::{HourlySource, Poll, ReplaySource};

use crate::error::{Error, Result};
use crate::timeseries::load_replay_frame;

pub struct Experiment {
    config: ExperimentConfig,
    sources: Vec<(String, Box<dyn HourlySource>)>,
    cities: Vec<CityData>,
    states: Vec<ComboState>,
    pool: rayon::ThreadPool,
    ticks: usize,
}

impl Experiment {
    /// `sources` must hold one entry per configured city.
    pub fn new(config: ExperimentConfig, mut sources: BTreeMap<String, Box<dyn HourlySource>>) -> Result<Self> {
        config.validate()?;
        let mut ordered = Vec::new();
        for name in config.cities.keys() {
            let src = sources
                .remove(name)
                .ok_or_else(|| Error::Config(format!("no data source for city `{name}`")))?;
            ordered.push((name.clone(), src));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.energy.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            config,
            sources: ordered,
            cities: Vec::new(),
            states: Vec::new(),
            pool,
            ticks: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn states(&self) -> &[ComboState] {
        &self.states
    }

    pub fn cities(&self) -> &[CityData] {
        &self.cities
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }


    /// Loads history, freezes each city's schema and fits every combination.
    pub fn warm_up(&mut self, log: &mut ExperimentLog) -> Result<()> {
        let cfg = &self.config;
        for (name, src) in &mut self.sources {
            let raw = src.history()?;
            let city = CityData::from_history(name, &raw, &cfg.data)?;
            for (tname, target) in &cfg.targets {
                if city.features.column_index(&target.column).is_none() {
                    return Err(Error::Config(format!(
                        "[targets.{tname}] column `{}` is not a feature of city `{name}` after preprocessing",
                        target.column
                    )));
                }
            }
            self.cities.push(city);
        }
        for city in &self.cities {
            for (tname, target) in &cfg.targets {
                for (mname, spec) in &cfg.models {
                    for &retrain in &cfg.policies.retrain {
                        for &window in &cfg.policies.window {
                            let id = ComboId {
                                city: city.name.clone(),
                                target: tname.clone(),
                                model: mname.clone(),
                                retrain,
                                window,
                            };
                            self.states.push(ComboState::new(id, spec.clone(), target.clone()));
                        }
                    }
                }
            }
        }
        let ctx = context(&self.config);
        let cities = &self.cities;
        let states = &mut self.states;
        let emitted: Vec<_> = self.pool.install(|| {
            states
                .par_iter_mut()
                .map(|s| {
                    let city = cities.iter().find(|c| c.name == s.id.city).expect("city exists");
                    s.retrain(city, &ctx, TrainTrigger::Initial)
                })
                .collect()
        });
        for batch in emitted {
            for (t, body) in batch {
                log.push(t, body);
            }
        }
        Ok(())
    }

    /// Advances the clock by one hour. Returns `false` once any source is
    /// exhausted.
    pub fn step(&mut self, log: &mut ExperimentLog) -> Result<bool> {
        let mut advanced = vec![false; self.cities.len()];
        for (k, (name, src)) in self.sources.iter_mut().enumerate() {
            let city = &mut self.cities[k];
            match src.poll() {
                Ok(Poll::Exhausted) => return Ok(false),
                Ok(Poll::Rows(rows)) => {
                    let before = city.n_rows();
                    for note in city.append(&rows)? {
                        log.push(city.last_timestamp().expect("rows"), RecordBody::Gap { city: name.clone(), message: note });
                    }
                    advanced[k] = city.n_rows() > before;
                }
                Err(Error::Source(msg)) => {
                    let t = city.last_timestamp().expect("rows") + crate::timeseries::one_hour();
                    log.push(t, RecordBody::Gap { city: name.clone(), message: msg });
                }
                Err(e) => return Err(e),
            }
        }
        self.ticks += 1;
        let ctx = context(&self.config);
        let cities = &self.cities;
        let states = &mut self.states;
        let emitted: Vec<Result<_>> = self.pool.install(|| {
            states
                .par_iter_mut()
                .map(|s| {
                    let k = cities.iter().position(|c| c.name == s.id.city).expect("city exists");
                    if advanced[k] {
                        s.tick(&cities[k], &ctx)
                    } else {
                        Ok(Vec::new())
                    }
                })
                .collect()
        });
        for batch in emitted {
            for (t, body) in batch? {
                log.push(t, body);
            }
        }
        Ok(true)
    }

    pub fn run(&mut self, log: &mut ExperimentLog) -> Result<()> {
        self.warm_up(log)?;
        while self.step(log)? {}
        Ok(())
    }
}

fn context(config: &ExperimentConfig) -> TickContext<'_> {
    TickContext {
        data: &config.data,
        horizon: &config.variance_horizon,
        drift: &config.drift,
        watts: config.energy.watts,
    }
}

/// Replay sources for every city, per the `[clock]` settings.
pub fn replay_sources(config: &ExperimentConfig) -> Result<BTreeMap<String, Box<dyn HourlySource>>> {
    let mut out: BTreeMap<String, Box<dyn HourlySource>> = BTreeMap::new();
    for (name, city) in &config.cities {
        let path = city
            .replay
            .as_ref()
            .ok_or_else(|| Error::Config(format!("[cities.{name}] has no replay path")))?;
        if !path.exists() {
            return Err(Error::Config(format!("replay file {} does not exist", path.display())));
        }
        let frame = load_replay_frame(path)?;
        out.insert(
            name.clone(),
            Box::new(ReplaySource::new(frame, config.clock.warmup_hours, config.clock.ticks)?),
        );
    }
    Ok(out)
}

pub fn run_experiment(config: &ExperimentConfig, sources: BTreeMap<String, Box<dyn HourlySource>>) -> Result<ExperimentLog> {
    let mut log = ExperimentLog::default();
    Experiment::new(config.clone(), sources)?.run(&mut log)?;
    Ok(log)
}
