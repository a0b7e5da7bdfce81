use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use nowcast_core::drift::{build_drift_window, check_drift};
use nowcast_core::evaluate::{metric_rows, render_report, BootstrapConfig};
use nowcast_core::horizon::{HorizonConfig, HorizonResult};
use nowcast_core::regressors::{load_model, save_model};
use nowcast_core::scheduler::{
    replay_sources, variance_horizon_of, CityConfig, CityData, ClockMode, DataConfig, Experiment, ExperimentConfig,
    ExperimentLog, HourlySource,
};
use nowcast_core::synth::{gaussian_frame, linear_stream, weather_stream, LinearStream, WeatherStream};
use nowcast_core::timeseries::{load_replay_frame, parse_timestamp, save_replay as save_frame, GridSpec, LatLon, TimeFrame};
use nowcast_core::Error;
use nowcast_ingest::{fetch_or_cached, save_replay, Cache, DateRange, LiveSource, SourceSpec, SystemClock};

use crate::args::{Cli, Command, GlobalArgs, SynthKind};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Fetch { start, end, days, cache } => {
            let range = |history_days: usize| -> Result<DateRange> {
                Ok(match (start, end) {
                    (Some(s), Some(e)) => DateRange::new(*s, *e)?,
                    _ => DateRange::ending(end.unwrap_or_else(|| Utc::now().date_naive()), days.unwrap_or(history_days))?,
                })
            };
            fetch(g, &range, cache.as_deref())
        }
        Command::Run => run_replay(g),
        Command::LiveRun { ticks } => live_run(g, *ticks),
        Command::DriftCheck { model, city, at } => drift_check(g, model, city.as_deref(), at.as_deref()),
        Command::Horizon {
            city,
            replay,
            at,
            threshold,
            max_window,
        } => horizon(g, city.as_deref(), replay.as_deref(), at.as_deref(), *threshold, *max_window),
        Command::Report { log } => report(g, log.as_deref()),
        Command::Synth {
            kind,
            length,
            features,
            points_per_side,
            shift_at,
            output,
        } => synth(g, *kind, *length, *features, *points_per_side, *shift_at, output.as_deref()),
    }
}

/// Loads `--config`, then applies the global overrides.
pub fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config PATH".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!("config file {} does not exist", path.display())).into());
    }
    let mut cfg = ExperimentConfig::load(path)?;
    apply_overrides(&mut cfg, g);
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, g: &GlobalArgs) {
    if let Some(seed) = g.seed {
        for spec in cfg.models.values_mut() {
            spec.seed = seed;
        }
        cfg.evaluate.seed = seed;
    }
    if let Some(w) = g.watts {
        cfg.energy.watts = w;
    }
}

/// HTTP client settings for one configured city.
pub fn source_spec(cfg: &ExperimentConfig, name: &str, city: &CityConfig, offline: bool) -> Result<SourceSpec> {
    let (Some(lat), Some(lon)) = (city.latitude, city.longitude) else {
        return Err(Error::Config(format!("[cities.{name}] needs latitude and longitude to fetch")).into());
    };
    let grid = GridSpec {
        center: LatLon::new(lat, lon),
        span_km: city.span_km,
        points_per_side: city.points_per_side,
    };
    let src = &cfg.source;
    let mut spec = SourceSpec::new(src.api_base.clone(), grid);
    spec.reference_api_base = src.reference_api_base.clone();
    if !city.variables.is_empty() {
        spec.variables = city.variables.clone();
    }
    spec.reference_variables = city.reference_variables.clone();
    spec.history_days = city.history_days;
    spec.source_tag = src.source_tag.clone();
    spec.concurrency = src.concurrency;
    spec.min_request_interval = Duration::from_millis(src.min_request_interval_ms);
    spec.timeout = Duration::from_secs(src.timeout_seconds);
    spec.offline = offline;
    Ok(spec)
}

/// Largest training window a run can request, validation rows excluded.
fn effective_max_window(cfg: &ExperimentConfig) -> usize {
    cfg.data
        .history_hours
        .max(cfg.variance_horizon.max_window)
        .saturating_sub(cfg.data.validation_rows())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn fetch(g: &GlobalArgs, range: &dyn Fn(usize) -> Result<DateRange>, cache_dir: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = cache_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.source.cache_dir.clone())
        .unwrap_or_else(|| g.out.join("cache"));
    let cache = Cache::open(dir)?;
    let mut batches = Vec::new();
    for (name, city) in &cfg.cities {
        let spec = source_spec(&cfg, name, city, g.offline)?;
        let r = range(city.history_days)?;
        log::info!("{name}: fetching {} .. {}", r.start, r.end);
        batches.push((name, fetch_or_cached(&spec, r, Some(&cache))?));
    }
    create_dir(&g.out)?;
    let mut staged = Vec::new();
    for (name, batch) in &batches {
        let part = g.out.join(format!("{name}.csv.part"));
        save_replay(batch, &part)?;
        staged.push((part, g.out.join(format!("{name}.csv"))));
    }
    for (part, dest) in staged {
        fs::rename(&part, &dest).map_err(|e| Error::io(&dest, e))?;
        println!("{}", dest.display());
    }
    Ok(())
}

fn model_file_name(label: &str) -> String {
    format!("{}.ncm", label.replace('/', "__"))
}

/// Runs warm-up and the hourly loop, writing the log even when a tick fails.
fn drive(g: &GlobalArgs, cfg: ExperimentConfig, sources: BTreeMap<String, Box<dyn HourlySource>>) -> Result<()> {
    create_dir(&g.out)?;
    let log_path = g.out.join("log.ndjson");
    let bootstrap = cfg.evaluate;
    let mut exp = Experiment::new(cfg, sources)?;
    let mut log = ExperimentLog::default();
    let outcome = exp.warm_up(&mut log).and_then(|()| {
        while exp.step(&mut log)? {}
        Ok(())
    });
    log.save(&log_path)?;
    outcome?;
    let models = g.out.join("models");
    create_dir(&models)?;
    for state in exp.states() {
        if let Some(model) = &state.model {
            save_model(model, &models.join(model_file_name(&state.id.label())))?;
        }
    }
    write_report(&log, &bootstrap, &g.out)
}

fn write_report(log: &ExperimentLog, bootstrap: &BootstrapConfig, out: &Path) -> Result<()> {
    let rows = metric_rows(log, bootstrap)?;
    let files = render_report(&rows, out)?;
    let table = fs::read_to_string(&files.table).map_err(|e| Error::io(&files.table, e))?;
    print!("{table}");
    Ok(())
}

fn run_replay(g: &GlobalArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    cfg.clock.mode = ClockMode::Replay;
    let sources = replay_sources(&cfg)?;
    drive(g, cfg, sources)
}

fn live_run(g: &GlobalArgs, ticks: Option<usize>) -> Result<()> {
    let mut cfg = load_config(g)?;
    cfg.clock.mode = ClockMode::Live;
    if let Some(t) = ticks {
        cfg.clock.ticks = Some(t);
    }
    if g.offline {
        return Err(Error::Source("live runs need network access; --offline was given".into()).into());
    }
    let cache = match &cfg.source.cache_dir {
        Some(dir) => Some(Cache::open(dir.clone())?),
        None => None,
    };
    let mut sources: BTreeMap<String, Box<dyn HourlySource>> = BTreeMap::new();
    for (name, city) in &cfg.cities {
        let spec = source_spec(&cfg, name, city, false)?;
        spec.validate(effective_max_window(&cfg), cfg.data.validation_days)?;
        let mut src = LiveSource::new(
            spec,
            Box::new(SystemClock),
            Duration::from_secs(cfg.clock.poll_seconds),
            cfg.clock.max_retries,
            cfg.clock.ticks,
        );
        if let Some(c) = &cache {
            src = src.with_cache(c.clone());
        }
        sources.insert(name.clone(), Box::new(src));
    }
    drive(g, cfg, sources)
}

fn parse_at(at: Option<&str>) -> Result<Option<DateTime<Utc>>> {
    at.map(|s| parse_timestamp(s).map_err(|e| CliError::Usage(format!("--at `{s}`: {e}"))))
        .transpose()
}

fn rows_until(frame: &TimeFrame, at: Option<DateTime<Utc>>) -> TimeFrame {
    match at {
        Some(t) => frame.head(frame.timestamps().partition_point(|&ts| ts <= t)),
        None => frame.clone(),
    }
}

/// Preprocessed features of `city` (default: the first configured city).
fn city_features(
    cfg: &ExperimentConfig,
    city: Option<&str>,
    at: Option<DateTime<Utc>>,
) -> Result<(String, CityData)> {
    let (name, city_cfg) = match city {
        Some(c) => (
            c.to_string(),
            cfg.cities
                .get(c)
                .ok_or_else(|| Error::Config(format!("no city `{c}` in the config")))?,
        ),
        None => {
            let (n, c) = cfg
                .cities
                .iter()
                .next()
                .ok_or_else(|| Error::Config("config has no cities".into()))?;
            (n.clone(), c)
        }
    };
    let path = city_cfg
        .replay
        .as_ref()
        .ok_or_else(|| Error::Config(format!("[cities.{name}] has no replay path")))?;
    let data = replay_city(&name, path, &cfg.data, at)?;
    Ok((name, data))
}

fn replay_city(name: &str, path: &Path, data: &DataConfig, at: Option<DateTime<Utc>>) -> Result<CityData> {
    if !path.exists() {
        return Err(Error::Config(format!("replay file {} does not exist", path.display())).into());
    }
    let raw = rows_until(&load_replay_frame(path)?, at);
    Ok(CityData::from_history(name, &raw, data)?)
}

fn drift_check(g: &GlobalArgs, model: &Path, city: Option<&str>, at: Option<&str>) -> Result<()> {
    let cfg = load_config(g)?;
    if !model.exists() {
        return Err(Error::Config(format!("model file {} does not exist", model.display())).into());
    }
    let model = load_model(model)?;
    let (_, data) = city_features(&cfg, city, parse_at(at)?)?;
    let window = build_drift_window(&data.features, &cfg.drift, &model)?;
    let verdict = check_drift(&model, &window, &cfg.drift)?;
    println!("{}", serde_json::to_string(&verdict).expect("verdict serializes"));
    Ok(())
}

fn horizon(
    g: &GlobalArgs,
    city: Option<&str>,
    replay: Option<&Path>,
    at: Option<&str>,
    threshold: Option<f64>,
    max_window: Option<usize>,
) -> Result<()> {
    let at = parse_at(at)?;
    let (name, data, mut hcfg) = match replay {
        Some(path) => {
            let (data_cfg, hcfg) = match &g.config {
                Some(_) => {
                    let cfg = load_config(g)?;
                    (cfg.data, cfg.variance_horizon)
                }
                None => (DataConfig::default(), HorizonConfig::default()),
            };
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("replay").to_string();
            let data = replay_city(&name, path, &data_cfg, at)?;
            (name, data, hcfg)
        }
        None => {
            let cfg = load_config(g)?;
            let (name, data) = city_features(&cfg, city, at)?;
            (name, data, cfg.variance_horizon)
        }
    };
    if let Some(t) = threshold {
        hcfg.threshold = t;
    }
    if let Some(m) = max_window {
        hcfg.max_window = m;
    }
    hcfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let result: HorizonResult = variance_horizon_of(&data.features, &hcfg)?;
    create_dir(&g.out)?;
    let curve = g.out.join(format!("psi_{name}.csv"));
    write_text(&curve, &result.curve_csv())?;
    let summary = serde_json::json!({
        "city": name,
        "t_vh": result.t_vh,
        "psi": result.psi_at(result.t_vh),
        "stopped_by": result.stopped_by,
        "curve": curve,
    });
    println!("{summary}");
    Ok(())
}

fn report(g: &GlobalArgs, log: Option<&Path>) -> Result<()> {
    let path = log.map(Path::to_path_buf).unwrap_or_else(|| g.out.join("log.ndjson"));
    if !path.exists() {
        return Err(Error::Config(format!("log file {} does not exist", path.display())).into());
    }
    let bootstrap = match &g.config {
        Some(_) => load_config(g)?.evaluate,
        None => BootstrapConfig {
            seed: g.seed.unwrap_or_default(),
            ..BootstrapConfig::default()
        },
    };
    let log = ExperimentLog::load(&path)?;
    create_dir(&g.out)?;
    write_report(&log, &bootstrap, &g.out)
}

fn synth(
    g: &GlobalArgs,
    kind: SynthKind,
    length: Option<usize>,
    features: usize,
    points_per_side: usize,
    shift_at: Option<usize>,
    output: Option<&Path>,
) -> Result<()> {
    let frame = match kind {
        SynthKind::Weather => {
            let mut cfg = WeatherStream {
                points_per_side,
                shift_at,
                ..WeatherStream::default()
            };
            if let Some(days) = length {
                cfg.days = days;
            }
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            weather_stream(&cfg)
        }
        SynthKind::Gaussian => gaussian_frame(length.unwrap_or(720), features, g.seed.unwrap_or_default()),
        SynthKind::Linear => {
            let mut cfg = LinearStream {
                features,
                shift_at,
                ..LinearStream::default()
            };
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            linear_stream(&cfg, length.unwrap_or(720))
        }
    };
    let path: PathBuf = output.map(Path::to_path_buf).unwrap_or_else(|| g.out.join("synth.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_frame(&frame, &path)?;
    println!("{}", path.display());
    Ok(())
}
