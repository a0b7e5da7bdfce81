//! Metrics recomputed from an experiment log: per-horizon RMSE, bootstrap
//! mean ± std, energy totals and the cost-normalised score
//! `rmse_mean · Wh / prediction`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{ComboId, EnergyEvent, ExperimentLog, RecordBody};

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples == 0 {
            return Err(Error::Config("[evaluate] n_resamples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Predicted and observed values of every resolved forecast, in log order.
fn resolutions<'a>(log: &'a ExperimentLog, combo: &'a ComboId) -> impl Iterator<Item = (&'a [f64], &'a [f64], Option<&'a [f64]>)> + 'a {
    log.for_combo(combo).filter_map(|r| match &r.body {
        RecordBody::Resolution {
            predicted,
            truth,
            reference,
            ..
        } => Some((predicted.as_slice(), truth.as_slice(), reference.as_deref())),
        _ => None,
    })
}

/// RMSE per horizon step from `(forecast, truth)` pairs.
pub fn rmse_from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<Vec<f64>> {
    let mut sums: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (pred, truth) in pairs {
        if pred.len() != truth.len() {
            return Err(Error::SchemaMismatch(format!(
                "forecast of {} steps paired with {} observations",
                pred.len(),
                truth.len()
            )));
        }
        if sums.is_empty() {
            sums = vec![0.0; pred.len()];
        } else if sums.len() != pred.len() {
            return Err(Error::SchemaMismatch("forecasts of differing horizon".into()));
        }
        for (s, (p, t)) in sums.iter_mut().zip(pred.iter().zip(truth)) {
            *s += (p - t) * (p - t);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData("no resolved forecasts".into()));
    }
    Ok(sums.into_iter().map(|s| (s / n as f64).sqrt()).collect())
}

pub fn rmse_per_horizon(log: &ExperimentLog, combo: &ComboId) -> Result<Vec<f64>> {
    rmse_from_pairs(resolutions(log, combo).map(|(p, t, _)| (p, t)))
        .map_err(|e| match e {
            Error::InsufficientData(_) => Error::InsufficientData(format!("no resolved forecasts for {}", combo.label())),
            other => other,
        })
}

/// Mean and population std of `n_resamples` bootstrap resample means.
pub fn bootstrap_mean_std(values: &[f64], config: &BootstrapConfig) -> Result<(f64, f64)> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::InsufficientData("bootstrap of an empty vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = values.len();
    let means: Vec<f64> = (0..config.n_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / means.len() as f64;
    Ok((mean, var.sqrt()))
}

pub fn cost_normalized(rmse_mean: f64, wh_total: f64, n_predictions: usize) -> Result<f64> {
    if n_predictions == 0 {
        return Err(Error::InvalidArgument("cost score needs at least one prediction".into()));
    }
    Ok(rmse_mean * wh_total / n_predictions as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub model_rmse_mean: f64,
    pub ref_rmse_mean: f64,
    pub relative_gap: f64,
}

/// `model / reference - 1`; undefined for a zero reference error.
pub fn relative_gap(model: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::NotAvailable("reference RMSE is zero".into()));
    }
    Ok(model / reference - 1.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores model and reference on the resolutions where both exist.
pub fn compare_to_reference(log: &ExperimentLog, combo: &ComboId) -> Result<ReferenceComparison> {
    let rows: Vec<_> = resolutions(log, combo)
        .filter_map(|(p, t, r)| r.map(|r| (p, t, r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::NotAvailable(format!("no reference forecasts for {}", combo.label())));
    }
    let model = rmse_from_pairs(rows.iter().map(|&(p, t, _)| (p, t)))?;
    let reference = rmse_from_pairs(rows.iter().map(|&(_, t, r)| (r, t)))?;
    let (m, r) = (mean(&model), mean(&reference));
    Ok(ReferenceComparison {
        model_rmse_mean: m,
        ref_rmse_mean: r,
        relative_gap: relative_gap(m, r)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub city: String,
    pub target: String,
    pub regressor: String,
    pub policy: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rmse_per_horizon: Vec<f64>,
    /// Training energy, Wh.
    pub wh_total: f64,
    pub n_predictions: usize,
    pub cost_score: f64,
    pub ref_rmse: Option<f64>,
    pub n_trains: usize,
    pub mean_train_rows: f64,
}

pub fn metric_row(log: &ExperimentLog, combo: &ComboId, config: &BootstrapConfig) -> Result<MetricRow> {
    let per_h = rmse_per_horizon(log, combo)?;
    let (rmse_mean, rmse_std) = bootstrap_mean_std(&per_h, config)?;
    let mut wh_total = 0.0;
    let mut n_predictions = 0;
    let mut train_rows = Vec::new();
    for r in log.for_combo(combo) {
        match &r.body {
            RecordBody::Energy {
                event: EnergyEvent::Train,
                wh,
                ..
            } => wh_total += wh,
            RecordBody::Forecast { .. } => n_predictions += 1,
            RecordBody::Train { train_rows: rows, .. } => train_rows.push(*rows as f64),
            _ => {}
        }
    }
    let ref_pairs: Vec<_> = resolutions(log, combo)
        .filter_map(|(_, t, r)| r.map(|r| (r, t)))
        .collect();
    let ref_rmse = if ref_pairs.is_empty() {
        None
    } else {
        let per_h = rmse_from_pairs(ref_pairs)?;
        Some(bootstrap_mean_std(&per_h, config)?.0)
    };
    Ok(MetricRow {
        city: combo.city.clone(),
        target: combo.target.clone(),
        regressor: combo.model.clone(),
        policy: combo.policy().label(),
        rmse_mean,
        rmse_std,
        rmse_per_horizon: per_h,
        wh_total,
        n_predictions,
        cost_score: cost_normalized(rmse_mean, wh_total, n_predictions)?,
        ref_rmse,
        n_trains: train_rows.len(),
        mean_train_rows: if train_rows.is_empty() { 0.0 } else { mean(&train_rows) },
    })
}

/// One row per combination with at least one resolved forecast.
pub fn metric_rows(log: &ExperimentLog, config: &BootstrapConfig) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for combo in log.combos() {
        match metric_row(log, &combo, config) {
            Ok(r) => rows.push(r),
            Err(Error::InsufficientData(m)) => log::warn!("skipping {}: {m}", combo.label()),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "city,target,regressor,policy,rmse_mean,rmse_std,rmse_per_horizon,wh_total,n_predictions,cost_score,ref_rmse,n_trains,mean_train_rows";

/// Report CSV; `rmse_per_horizon` is a `;`-joined list.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let per_h: Vec<String> = r.rmse_per_horizon.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.city,
            r.target,
            r.regressor,
            r.policy,
            r.rmse_mean,
            r.rmse_std,
            per_h.join(";"),
            r.wh_total,
            r.n_predictions,
            r.cost_score,
            r.ref_rmse.map(|v| v.to_string()).unwrap_or_default(),
            r.n_trains,
            r.mean_train_rows
        );
    }
    out
}

pub fn parse_csv_rows(text: &str) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let loc = |c: &str| format!("report row {}, column {c}", i + 2);
        let rec = rec.map_err(|e| Error::parse(format!("report row {}", i + 2), e.to_string()))?;
        let f = |k: usize, c: &str| -> Result<f64> { rec[k].parse().map_err(|e: std::num::ParseFloatError| Error::parse(loc(c), e.to_string())) };
        let u = |k: usize, c: &str| -> Result<usize> { rec[k].parse().map_err(|e: std::num::ParseIntError| Error::parse(loc(c), e.to_string())) };
        out.push(MetricRow {
            city: rec[0].to_string(),
            target: rec[1].to_string(),
            regressor: rec[2].to_string(),
            policy: rec[3].to_string(),
            rmse_mean: f(4, "rmse_mean")?,
            rmse_std: f(5, "rmse_std")?,
            rmse_per_horizon: rec[6]
                .split(';')
                .map(|v| v.parse().map_err(|e: std::num::ParseFloatError| Error::parse(loc("rmse_per_horizon"), e.to_string())))
                .collect::<Result<_>>()?,
            wh_total: f(7, "wh_total")?,
            n_predictions: u(8, "n_predictions")?,
            cost_score: f(9, "cost_score")?,
            ref_rmse: if rec[10].is_empty() { None } else { Some(f(10, "ref_rmse")?) },
            n_trains: u(11, "n_trains")?,
            mean_train_rows: f(12, "mean_train_rows")?,
        });
    }
    Ok(out)
}

/// Text table grouped by city and target; policies then models within.
/// Each group with reference forecasts ends with a reference row whose
/// cost cells are `-`.
pub fn render_table(rows: &[MetricRow]) -> String {
    let mut out = String::new();
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.city.as_str(), r.target.as_str())) {
            groups.push((r.city.as_str(), r.target.as_str()));
        }
    }
    for (city, target) in groups {
        let _ = writeln!(out, "{city} / {target}");
        let _ = writeln!(
            out,
            "  {:<34} {:<12} {:>18} {:>12} {:>16}",
            "policy", "model", "RMSE", "Wh", "RMSE*Wh/pred"
        );
        let mut members: Vec<&MetricRow> = rows.iter().filter(|r| r.city == city && r.target == target).collect();
        members.sort_by(|a, b| a.policy.cmp(&b.policy).then(a.regressor.cmp(&b.regressor)));
        for r in &members {
            let _ = writeln!(
                out,
                "  {:<34} {:<12} {:>18} {:>12.4} {:>16.6}",
                r.policy,
                r.regressor,
                format!("{:.3} ± {:.3}", r.rmse_mean, r.rmse_std),
                r.wh_total,
                r.cost_score
            );
        }
        if let Some(reference) = members.iter().find_map(|r| r.ref_rmse) {
            let _ = writeln!(
                out,
                "  {:<34} {:<12} {:>18} {:>12} {:>16}",
                "reference",
                "-",
                format!("{reference:.3}"),
                "-",
                "-"
            );
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub table: PathBuf,
}

pub fn render_report(rows: &[MetricRow], out_dir: &Path) -> Result<ReportFiles> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no metric rows to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join("metrics.csv");
    let table = out_dir.join("report.txt");
    std::fs::write(&csv, rows_to_csv(rows)).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&table, render_table(rows)).map_err(|e| Error::io(&table, e))?;
    Ok(ReportFiles { csv, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{RetrainPolicy, WindowPolicy};
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn combo() -> ComboId {
        ComboId {
            city: "c".into(),
            target: "t".into(),
            model: "m".into(),
            retrain: RetrainPolicy::Hourly,
            window: WindowPolicy::FullStatic,
        }
    }

    fn log_with(pairs: &[(Vec<f64>, Vec<f64>, Option<Vec<f64>>)]) -> ExperimentLog {
        let t0 = Utc.with_ymd_and_hms(2023, 5, 12, 0, 0, 0).unwrap();
        let mut log = ExperimentLog::default();
        for (i, (p, t, r)) in pairs.iter().enumerate() {
            let at = t0 + Duration::hours(i as i64);
            log.push(
                at,
                RecordBody::Forecast {
                    combo: combo(),
                    scaled: p.clone(),
                    physical: p.clone(),
                },
            );
            log.push(
                at,
                RecordBody::Resolution {
                    combo: combo(),
                    issued_at: at,
                    predicted: p.clone(),
                    truth: t.clone(),
                    reference: r.clone(),
                },
            );
        }
        log
    }

    #[test]
    fn rmse_examples() {
        let t = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let perfect = log_with(&[(t.clone(), t.clone(), None), (t.clone(), t.clone(), None)]);
        assert_eq!(rmse_per_horizon(&perfect, &combo()).unwrap(), vec![0.0; 6]);
        let plus_one: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        let offset = log_with(&[(plus_one.clone(), t.clone(), None), (plus_one, t.clone(), None)]);
        assert_eq!(rmse_per_horizon(&offset, &combo()).unwrap(), vec![1.0; 6]);
        let alternating: Vec<_> = [1.0, -1.0, 1.0, -1.0]
            .iter()
            .map(|e| (vec![e + 0.5], vec![0.5], None))
            .collect();
        assert_eq!(rmse_per_horizon(&log_with(&alternating), &combo()).unwrap(), vec![1.0]);
        assert!(matches!(
            rmse_per_horizon(&ExperimentLog::default(), &combo()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bootstrap_examples() {
        let cfg = BootstrapConfig::default();
        assert_eq!(bootstrap_mean_std(&[5.0], &cfg).unwrap(), (5.0, 0.0));
        let (m, s) = bootstrap_mean_std(&[2.5; 3], &cfg).unwrap();
        assert!((m - 2.5).abs() < 1e-12 && s < 1e-12);
        let big = BootstrapConfig {
            n_resamples: 10_000,
            seed: 3,
        };
        let (m, s) = bootstrap_mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &big).unwrap();
        let se = (35.0f64 / 12.0 / 6.0).sqrt();
        assert!((m - 3.5).abs() < 0.05, "{m}");
        assert!((s - se).abs() / se < 0.15, "{s} vs {se}");
        assert!(bootstrap_mean_std(&[], &cfg).is_err());
        assert_eq!(
            bootstrap_mean_std(&[1.0, 9.0, 4.0], &cfg).unwrap(),
            bootstrap_mean_std(&[1.0, 9.0, 4.0], &cfg).unwrap()
        );
    }

    #[test]
    fn cost_examples() {
        // Wh back-solved so that 1.38 * wh / 110 = 4.61
        let wh = 4.61 * 110.0 / 1.38;
        let score = cost_normalized(1.38, wh, 110).unwrap();
        assert!((score - 4.61).abs() / 4.61 < 0.005);
        assert_eq!(cost_normalized(3.0, 0.0, 7).unwrap(), 0.0);
        assert_eq!(cost_normalized(2.0, 100.0, 50).unwrap(), 4.0);
        assert!(matches!(cost_normalized(1.0, 1.0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reference_comparison() {
        let t = vec![1.0, 2.0];
        let p = vec![1.5, 2.5];
        let same = log_with(&[(p.clone(), t.clone(), Some(p.clone()))]);
        assert_eq!(compare_to_reference(&same, &combo()).unwrap().relative_gap, 0.0);
        assert!((relative_gap(1.46, 1.33).unwrap() - 0.0977).abs() < 1e-3);
        let exact = log_with(&[(p.clone(), t.clone(), Some(t.clone()))]);
        assert!(matches!(compare_to_reference(&exact, &combo()), Err(Error::NotAvailable(_))));
        let none = log_with(&[(p, t, None)]);
        assert!(matches!(compare_to_reference(&none, &combo()), Err(Error::NotAvailable(_))));
    }

    #[test]
    fn report_rows_round_trip_and_reference_row() {
        let t = vec![1.0, 2.0, 3.0];
        let log = log_with(&[
            (vec![1.1, 2.2, 3.3], t.clone(), Some(vec![1.0, 2.5, 2.0])),
            (vec![0.9, 1.7, 3.4], t.clone(), Some(vec![1.2, 2.0, 3.0])),
        ]);
        let rows = metric_rows(&log, &BootstrapConfig::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.cost_score, cost_normalized(r.rmse_mean, r.wh_total, r.n_predictions).unwrap());
        let csv = rows_to_csv(&rows);
        assert_eq!(parse_csv_rows(&csv).unwrap(), rows);
        let table = render_table(&rows);
        let ref_line = table.lines().find(|l| l.trim_start().starts_with("reference")).unwrap();
        assert!(ref_line.trim_end().ends_with('-'));
        assert_eq!(ref_line.matches(" - ").count() + 1, 3);
    }

    proptest! {
        #[test]
        fn rmse_matches_brute_force(
            data in proptest::collection::vec(proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 6), 1..30)
        ) {
            let pairs: Vec<_> = data
                .iter()
                .map(|row| (row.iter().map(|x| x.0).collect::<Vec<_>>(), row.iter().map(|x| x.1).collect::<Vec<_>>(), None))
                .collect();
            let log = log_with(&pairs);
            let fast = rmse_per_horizon(&log, &combo()).unwrap();
            for h in 0..6 {
                let mut acc = 0.0;
                for row in &data {
                    let d = row[h].0 - row[h].1;
                    acc += d * d;
                }
                let brute = (acc / data.len() as f64).sqrt();
                prop_assert!((fast[h] - brute).abs() <= 1e-12 * brute.max(1.0));
            }
        }
    }
}
