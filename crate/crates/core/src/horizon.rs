//! Training-window selection from pairwise-distance variability.
//!
//! For a reference block `x` (the most recent rows) and a window `y_t` of the
//! `t` rows that precede it, `Ψ(t)` is the ratio of the standard deviation of
//! all `x`–`y_t` distances to the standard deviation of all distances within
//! `y_t`. The window grows until the mean absolute slope of `Ψ` over the last
//! `alpha` steps falls to `threshold`.
//!
//! [`find_variance_horizon`] grows the distance statistics incrementally (one
//! new row per hour adds `|x|` cross distances and `t - 1` within distances);
//! [`psi`] recomputes from scratch and serves as the reference.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON_LEN: usize = 6;
pub const DEFAULT_MAX_WINDOW: usize = 3600;
pub const DEFAULT_ALPHA: usize = 24;
pub const DEFAULT_THRESHOLD: f64 = 0.25e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonConfig {
    pub horizon_len: usize,
    pub max_window: usize,
    /// Number of slope steps averaged by the plateau test.
    pub alpha: usize,
    pub threshold: f64,
    /// Growth step Δt in hours.
    pub step: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            horizon_len: DEFAULT_HORIZON_LEN,
            max_window: DEFAULT_MAX_WINDOW,
            alpha: DEFAULT_ALPHA,
            threshold: DEFAULT_THRESHOLD,
            step: 1,
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_len < 2 {
            return Err(Error::InvalidArgument("horizon_len must be >= 2".into()));
        }
        if self.alpha < 2 || self.max_window <= self.alpha {
            return Err(Error::InvalidArgument(format!(
                "need max_window > alpha >= 2 (max_window {}, alpha {})",
                self.max_window, self.alpha
            )));
        }
        if self.step == 0 {
            return Err(Error::InvalidArgument("step must be >= 1".into()));
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::InvalidArgument("threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// Smallest candidate count the search accepts.
    pub fn min_candidates(&self) -> usize {
        self.alpha + self.horizon_len + 2
    }
}

/// Reference block plus candidate rows, most recent candidate first.
#[derive(Debug, Clone)]
pub struct HorizonQuery {
    pub reference: Array2<f64>,
    pub candidates: Array2<f64>,
    pub config: HorizonConfig,
}

impl HorizonQuery {
    /// Splits chronologically ordered (already scaled) rows into the
    /// reference block (last `horizon_len` rows) and up to `max_window`
    /// preceding candidates, reversed so the most recent comes first.
    pub fn from_chronological(rows: ArrayView2<'_, f64>, config: HorizonConfig) -> Result<Self> {
        config.validate()?;
        let n = rows.nrows();
        if n <= config.horizon_len {
            return Err(Error::InsufficientData(format!(
                "{n} rows cannot hold a {}-row reference block and candidates",
                config.horizon_len
            )));
        }
        let split = n - config.horizon_len;
        let reference = rows.slice(ndarray::s![split.., ..]).to_owned();
        let first = split.saturating_sub(config.max_window);
        let order: Vec<usize> = (first..split).rev().collect();
        let candidates = rows.select(Axis(0), &order);
        Ok(Self {
            reference,
            candidates,
            config,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    MaxWindowReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub t: usize,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub t_vh: usize,
    pub psi_curve: Vec<PsiPoint>,
    pub stopped_by: StopReason,
}

impl HorizonResult {
    pub fn psi_at(&self, t: usize) -> Option<f64> {
        self.psi_curve.iter().find(|p| p.t == t).map(|p| p.psi)
    }

    /// `t,psi` CSV with a header row.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("t,psi\n");
        for p in &self.psi_curve {
            out.push_str(&format!("{},{}\n", p.t, p.psi));
        }
        out
    }
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_width(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::SchemaMismatch(format!(
            "reference width {} != candidate width {}",
            x.ncols(),
            y.ncols()
        )));
    }
    Ok(())
}

/// All `|x|·|y|` distances, ordered by `x` row then `y` row.
pub fn cross_distances(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_width(x, y)?;
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InsufficientData("cross distances need non-empty blocks".into()));
    }
    let mut out = Vec::with_capacity(x.nrows() * y.nrows());
    for xi in x.rows() {
        for yj in y.rows() {
            out.push(euclidean(xi, yj));
        }
    }
    Ok(out)
}

/// All unordered pairwise distances within `y`.
pub fn within_distances(y: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "within distances need >= 2 rows, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(euclidean(y.row(i), y.row(j)));
        }
    }
    Ok(out)
}

/// Two-pass population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// `std(cross) / std(within)` recomputed from scratch.
pub fn psi(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let cross = cross_distances(x, y)?;
    let within = within_distances(y)?;
    ratio(population_std(&cross), population_std(&within), y.nrows())
}

fn ratio(cross_std: f64, within_std: f64, t: usize) -> Result<f64> {
    if !(within_std > 0.0) {
        return Err(Error::DegenerateWindow(format!(
            "within-window distances have zero spread at t = {t}"
        )));
    }
    Ok(cross_std / within_std)
}

/// Count/mean/M2 accumulator with batch merging.
#[derive(Debug, Clone, Copy, Default)]
struct RunningStats {
    n: f64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(&mut self, other: &RunningStats) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n / n;
        self.m2 += other.m2 + d * d * self.n * other.n / n;
        self.n = n;
    }

    fn std(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            (self.m2.max(0.0) / self.n).sqrt()
        }
    }
}

/// Grows the window one hour at a time from `t = horizon_len`, evaluating
/// `Ψ` every `step` hours, and stops at the first `t` where the mean absolute
/// slope over the last `alpha` evaluations is at most `threshold`.
pub fn find_variance_horizon(query: &HorizonQuery) -> Result<HorizonResult> {
    let cfg = &query.config;
    cfg.validate()?;
    let x = query.reference.view();
    let y = query.candidates.view();
    check_width(x, y)?;
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("empty reference block".into()));
    }
    if y.nrows() < cfg.min_candidates() {
        return Err(Error::InsufficientData(format!(
            "{} candidate rows, need at least {}",
            y.nrows(),
            cfg.min_candidates()
        )));
    }
    let limit = cfg.max_window.min(y.nrows());
    let start = cfg.horizon_len;

    let mut cross = RunningStats::default();
    let mut within = RunningStats::default();
    let mut curve = Vec::new();
    let mut abs_slopes: Vec<f64> = Vec::new();

    let mut next_eval = start;
    for t in 1..=limit {
        let new_row = y.row(t - 1);
        let mut batch = RunningStats::default();
        for xi in x.rows() {
            batch.push(euclidean(xi, new_row));
        }
        cross.merge(&batch);
        if t >= 2 {
            let mut batch = RunningStats::default();
            for j in 0..t - 1 {
                batch.push(euclidean(y.row(j), new_row));
            }
            within.merge(&batch);
        }
        if t != next_eval {
            continue;
        }
        next_eval += cfg.step;
        let value = ratio(cross.std(), within.std(), t)?;
        if let Some(prev) = curve.last().map(|p: &PsiPoint| p.psi) {
            abs_slopes.push(((value - prev) / cfg.step as f64).abs());
        }
        curve.push(PsiPoint { t, psi: value });
        if abs_slopes.len() >= cfg.alpha {
            let recent = &abs_slopes[abs_slopes.len() - cfg.alpha..];
            let mean = recent.iter().sum::<f64>() / cfg.alpha as f64;
            if mean <= cfg.threshold {
                return Ok(HorizonResult {
                    t_vh: t,
                    psi_curve: curve,
                    stopped_by: StopReason::Plateau,
                });
            }
        }
    }
    Ok(HorizonResult {
        t_vh: limit,
        psi_curve: curve,
        stopped_by: StopReason::MaxWindowReached,
    })
}
