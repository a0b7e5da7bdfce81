//! Seeded synthetic streams for tests, demos and the bundled fixture.

use chrono::{DateTime, Duration, TimeZone, Utc};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::timeseries::TimeFrame;

pub fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap()
}

fn hours_from(start: DateTime<Utc>, n: usize) -> Vec<DateTime<Utc>> {
    (0..n as i64).map(|h| start + Duration::hours(h)).collect()
}

/// `n × d` matrix of independent standard normal draws.
pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Array2::from_shape_simple_fn((n, d), || normal.sample(&mut rng))
}

/// As [`gaussian_rows`], wrapped in an hourly frame with columns `x0..`.
pub fn gaussian_frame(n: usize, d: usize, seed: u64) -> TimeFrame {
    let m = gaussian_rows(n, d, seed);
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let columns = m.columns().into_iter().map(|c| c.to_vec()).collect();
    TimeFrame::new(hours_from(default_start(), n), names, columns).expect("valid frame")
}

/// AR(1) features with a fixed linear target `y = w·x + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStream {
    pub features: usize,
    pub phi: f64,
    pub noise: f64,
    pub seed: u64,
    /// Row index from which every feature (and hence `y`) is shifted.
    pub shift_at: Option<usize>,
    /// Shift size in units of the stationary feature std.
    pub shift_sigmas: f64,
}

impl Default for LinearStream {
    fn default() -> Self {
        Self {
            features: 3,
            phi: 0.8,
            noise: 0.2,
            seed: 17,
            shift_at: None,
            shift_sigmas: 3.0,
        }
    }
}

pub fn linear_stream(cfg: &LinearStream, n: usize) -> TimeFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma = 1.0 / (1.0 - cfg.phi * cfg.phi).sqrt();
    let weights: Vec<f64> = (0..cfg.features).map(|j| 1.0 / (j + 1) as f64).collect();
    let mut state: Vec<f64> = (0..cfg.features).map(|_| sigma * normal.sample(&mut rng)).collect();
    let mut columns = vec![Vec::with_capacity(n); cfg.features + 1];
    for t in 0..n {
        let offset = match cfg.shift_at {
            Some(s) if t >= s => cfg.shift_sigmas * sigma,
            _ => 0.0,
        };
        let mut y = 0.0;
        for j in 0..cfg.features {
            state[j] = cfg.phi * state[j] + normal.sample(&mut rng);
            let x = state[j] + offset;
            columns[j].push(x);
            y += weights[j] * x;
        }
        columns[cfg.features].push(y + cfg.noise * normal.sample(&mut rng));
    }
    let mut names: Vec<String> = (0..cfg.features).map(|j| format!("x{j}")).collect();
    names.push("y".into());
    TimeFrame::new(hours_from(default_start(), n), names, columns).expect("valid frame")
}

/// Hourly single-point weather with a diurnal cycle, slow synoptic drift and
/// a noisy reference forecast column for the temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherStream {
    pub days: usize,
    pub seed: u64,
    /// Grid points per side; columns are suffixed `_r_c`.
    pub points_per_side: usize,
    /// Hour from which a regime shift (warmer, drier, windier) applies.
    pub shift_at: Option<usize>,
    pub shift_celsius: f64,
    pub reference_noise: f64,
    /// AR(1) coefficient and innovation sd of the slow synoptic component.
    pub synoptic_phi: f64,
    pub synoptic_sd: f64,
}

impl Default for WeatherStream {
    fn default() -> Self {
        Self {
            days: 30,
            seed: 2023,
            points_per_side: 1,
            shift_at: None,
            shift_celsius: 6.0,
            reference_noise: 0.9,
            synoptic_phi: 0.97,
            synoptic_sd: 0.2,
        }
    }
}

pub const WEATHER_VARIABLES: [&str; 9] = [
    "temperature_2m",
    "relative_humidity_2m",
    "dew_point_2m",
    "surface_pressure",
    "wind_speed_10m",
    "wind_gusts_10m",
    "cloud_cover",
    "shortwave_radiation",
    "precipitation",
];

struct Ar1 {
    phi: f64,
    sd: f64,
    value: f64,
}

impl Ar1 {
    fn new(phi: f64, sd: f64) -> Self {
        Self { phi, sd, value: 0.0 }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
        self.value = self.phi * self.value + self.sd * normal.sample(rng);
        self.value
    }
}

pub fn weather_stream(cfg: &WeatherStream) -> TimeFrame {
    let n = cfg.days * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ts = hours_from(default_start(), n);
    let points = cfg.points_per_side * cfg.points_per_side;
    let mut synoptic = Ar1::new(cfg.synoptic_phi, cfg.synoptic_sd);
    let mut moisture = Ar1::new(0.95, 2.0);
    let mut pressure = Ar1::new(0.99, 0.4);
    let mut gust = Ar1::new(0.9, 1.2);
    let mut cloud = Ar1::new(0.93, 6.0);
    let mut names = Vec::new();
    for var in WEATHER_VARIABLES {
        for p in 0..points {
            names.push(format!("{var}_{}_{}", p / cfg.points_per_side, p % cfg.points_per_side));
        }
    }
    names.push("ref_temperature_2m".into());
    let mut columns = vec![Vec::with_capacity(n); names.len()];
    for (t, stamp) in ts.iter().enumerate() {
        let hour = chrono::Timelike::hour(stamp) as f64;
        let shifted = matches!(cfg.shift_at, Some(s) if t >= s);
        let shift = if shifted { cfg.shift_celsius } else { 0.0 };
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
        let sun = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0);
        let s = synoptic.step(&mut rng, &normal);
        let m = moisture.step(&mut rng, &normal);
        let pr = pressure.step(&mut rng, &normal);
        let g = gust.step(&mut rng, &normal);
        let c = cloud.step(&mut rng, &normal);
        let temp_center = 15.0 + 6.0 * diurnal + s - 0.3 * pr + shift;
        for p in 0..points {
            let local = 0.2 * normal.sample(&mut rng) + 0.1 * p as f64;
            let temp = temp_center + local;
            let rh = (70.0 - 2.5 * (temp - 15.0) + m - if shifted { 15.0 } else { 0.0 }).clamp(5.0, 100.0);
            let dew = temp - (100.0 - rh) / 5.0;
            let sp = 1013.0 + 3.0 * pr - if shifted { 8.0 } else { 0.0 } + 0.1 * normal.sample(&mut rng);
            let wind = (8.0 + 2.0 * diurnal + g - 0.5 * pr + if shifted { 6.0 } else { 0.0 }).abs();
            let gusts = 1.6 * wind + 1.5 * normal.sample(&mut rng).abs();
            let cc = (45.0 + c - 8.0 * diurnal + 3.0 * normal.sample(&mut rng)).clamp(0.0, 100.0);
            let rad = 850.0 * sun * (1.0 - 0.7 * cc / 100.0);
            let precip = if cc > 80.0 && rh > 75.0 { 0.2 * (cc - 80.0) * normal.sample(&mut rng).abs() } else { 0.0 };
            for (v, value) in [temp, rh, dew, sp, wind, gusts, cc, rad, precip].into_iter().enumerate() {
                columns[v * points + p].push(round3(value));
            }
        }
        let truth_proxy = temp_center + 0.1 * (points / 2) as f64;
        columns[names.len() - 1].push(round3(truth_proxy + cfg.reference_noise * normal.sample(&mut rng)));
    }
    TimeFrame::new(ts, names, columns).expect("valid frame")
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}
