//! OpenMeteo-compatible HTTP client.
//!
//! Query contract, one GET per grid point:
//!
//! ```text
//! {api_base}?latitude=42.3601&longitude=-71.0589
//!     &hourly=temperature_2m,cloud_cover,...
//!     &start_date=2023-05-01&end_date=2023-05-02
//!     &timezone=UTC[&models={source_tag}]
//! ```
//!
//! The response must hold `hourly.time` (`YYYY-MM-DDTHH:MM` in UTC, or RFC
//! 3339) and one equally long array per requested variable; `null` entries
//! become missing values. Reference variables are requested once at the grid
//! centre and stored as `ref_<variable>` columns.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use nowcast_core::scheduler::REFERENCE_PREFIX;
use nowcast_core::timeseries::{build_grid, GridPoint, GridSpec, LatLon, TimeFrame};
use serde_json::Value;

use crate::batch::{FetchBatch, Fragment};
use crate::cache::{Cache, CacheKey};
use crate::error::{IngestError, Result};
use crate::variables::DEFAULT_VARIABLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
            .min(self.max_delay)
    }
}

/// Inclusive range of UTC calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(nowcast_core::Error::InvalidArgument(format!("date range {start}..{end} is reversed")).into());
        }
        Ok(Self { start, end })
    }

    /// `days` whole days ending on `end`.
    pub fn ending(end: NaiveDate, days: usize) -> Result<Self> {
        let days = days.max(1) as u64 - 1;
        let start = end
            .checked_sub_days(chrono::Days::new(days))
            .ok_or_else(|| nowcast_core::Error::InvalidArgument("date range underflows".into()))?;
        Self::new(start, end)
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn hours(&self) -> usize {
        self.days() * 24
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub api_base: String,
    /// Endpoint for reference variables; defaults to `api_base`.
    pub reference_api_base: Option<String>,
    pub variables: Vec<String>,
    pub reference_variables: Vec<String>,
    pub grid: GridSpec,
    pub history_days: usize,
    /// Sent as `models=`; also part of the cache key.
    pub source_tag: String,
    pub retry: RetryPolicy,
    /// Concurrent point requests.
    pub concurrency: usize,
    /// Minimum spacing between request starts.
    pub min_request_interval: Duration,
    pub timeout: Duration,
    /// Forbids network access.
    pub offline: bool,
}

impl SourceSpec {
    pub fn new(api_base: impl Into<String>, grid: GridSpec) -> Self {
        Self {
            api_base: api_base.into(),
            reference_api_base: None,
            variables: DEFAULT_VARIABLES.iter().map(|s| s.to_string()).collect(),
            reference_variables: Vec::new(),
            grid,
            history_days: 150,
            source_tag: "gfs_seamless".into(),
            retry: RetryPolicy::default(),
            concurrency: 4,
            min_request_interval: Duration::from_millis(100),
            timeout: Duration::from_secs(60),
            offline: false,
        }
    }

    /// `history_days` must cover the largest training window plus the
    /// validation span.
    pub fn validate(&self, max_window_hours: usize, validation_days: usize) -> Result<()> {
        if self.variables.is_empty() {
            return Err(nowcast_core::Error::Config("source needs at least one variable".into()).into());
        }
        let needed = (max_window_hours + validation_days * 24).div_ceil(24);
        if self.history_days < needed {
            return Err(nowcast_core::Error::Config(format!(
                "history_days {} is below the {needed} days the window and validation span need",
                self.history_days
            ))
            .into());
        }
        if self.concurrency == 0 {
            return Err(nowcast_core::Error::Config("concurrency must be >= 1".into()).into());
        }
        Ok(())
    }
}

struct Request<'a> {
    base: &'a str,
    coord: LatLon,
    variables: &'a [String],
    label: String,
}

fn coordinate_label(coord: LatLon) -> String {
    format!("({:.4}, {:.4})", coord.latitude, coord.longitude)
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn get_once(agent: &ureq::Agent, spec: &SourceSpec, req: &Request<'_>, range: DateRange) -> Result<String> {
    let mut call = agent
        .get(req.base)
        .query("latitude", format!("{:.4}", req.coord.latitude))
        .query("longitude", format!("{:.4}", req.coord.longitude))
        .query("hourly", req.variables.join(","))
        .query("start_date", range.start.to_string())
        .query("end_date", range.end.to_string())
        .query("timezone", "UTC");
    if !spec.source_tag.is_empty() {
        call = call.query("models", &spec.source_tag);
    }
    let mut resp = call
        .call()
        .map_err(|e| IngestError::Retryable(format!("{}: {e}", req.label)))?;
    let status = resp.status().as_u16();
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| IngestError::Retryable(format!("{}: reading body: {e}", req.label)))?;
    match status {
        200..=299 => Ok(body),
        429 | 500..=599 => Err(IngestError::Retryable(format!("{}: HTTP {status}", req.label))),
        _ => {
            let reason = serde_json::from_str::<Value>(&body)
                .ok()
                .and_then(|v| v.get("reason").and_then(Value::as_str).map(str::to_string))
                .unwrap_or(body);
            Err(IngestError::SourceUnavailable(format!("{}: HTTP {status}: {reason}", req.label)))
        }
    }
}

fn get_with_retry(agent: &ureq::Agent, spec: &SourceSpec, req: &Request<'_>, range: DateRange) -> Result<String> {
    let mut attempt = 0;
    loop {
        match get_once(agent, spec, req, range) {
            Err(IngestError::Retryable(msg)) => {
                if attempt >= spec.retry.max_retries {
                    return Err(IngestError::SourceUnavailable(format!(
                        "{msg} (gave up after {} attempts)",
                        attempt + 1
                    )));
                }
                let delay = spec.retry.delay(attempt);
                log::warn!("{msg}; retrying in {delay:?}");
                std::thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
        .map(|n| n.and_utc())
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc)))
}

/// Parses one point's JSON response into a frame with one column per
/// requested variable.
pub fn parse_payload(body: &str, variables: &[String], coordinate: &str) -> Result<TimeFrame> {
    let bad = |message: String| IngestError::Parse {
        coordinate: coordinate.to_string(),
        message,
    };
    let root: Value = serde_json::from_str(body).map_err(|e| bad(format!("invalid JSON: {e}")))?;
    let hourly = root.get("hourly").ok_or_else(|| bad("missing `hourly` object".into()))?;
    let times = hourly
        .get("time")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `hourly.time` array".into()))?;
    let timestamps = times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.as_str()
                .and_then(parse_time)
                .ok_or_else(|| bad(format!("hourly.time[{i}] is not a timestamp: {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = Vec::with_capacity(variables.len());
    for var in variables {
        let arr = hourly
            .get(var)
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("missing `hourly.{var}` array")))?;
        if arr.len() != timestamps.len() {
            return Err(bad(format!(
                "hourly.{var} has {} values for {} timestamps",
                arr.len(),
                timestamps.len()
            )));
        }
        let col = arr
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Null => Ok(f64::NAN),
                Value::Number(n) => n.as_f64().ok_or_else(|| bad(format!("hourly.{var}[{i}] out of range"))),
                other => Err(bad(format!("hourly.{var}[{i}] is not a number: {other}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        columns.push(col);
    }
    TimeFrame::new(timestamps, variables.to_vec(), columns).map_err(|e| bad(e.to_string()))
}

/// Fetches every grid point (and the reference series) for `range`. The
/// batch is rejected whole if any request fails after retries.
pub fn fetch_hourly(spec: &SourceSpec, range: DateRange) -> Result<FetchBatch> {
    if spec.offline {
        return Err(IngestError::SourceUnavailable("network access disabled (offline)".into()));
    }
    if spec.variables.is_empty() {
        return Err(nowcast_core::Error::Config("source needs at least one variable".into()).into());
    }
    let points: Vec<GridPoint> = build_grid(&spec.grid)?;
    let mut requests: Vec<Request<'_>> = points
        .iter()
        .map(|p| Request {
            base: &spec.api_base,
            coord: p.coord,
            variables: &spec.variables,
            label: coordinate_label(p.coord),
        })
        .collect();
    if !spec.reference_variables.is_empty() {
        requests.push(Request {
            base: spec.reference_api_base.as_deref().unwrap_or(&spec.api_base),
            coord: spec.grid.center,
            variables: &spec.reference_variables,
            label: format!("reference {}", coordinate_label(spec.grid.center)),
        });
    }
    let agent = agent(spec.timeout);
    let next = AtomicUsize::new(0);
    let pacing = Mutex::new(Instant::now());
    let slots: Vec<Mutex<Option<Result<TimeFrame>>>> = (0..requests.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..spec.concurrency.max(1).min(requests.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(req) = requests.get(k) else { break };
                {
                    let mut slot = pacing.lock().expect("pacing lock");
                    let now = Instant::now();
                    if *slot > now {
                        std::thread::sleep(*slot - now);
                    }
                    *slot = Instant::now() + spec.min_request_interval;
                }
                let result = get_with_retry(&agent, spec, req, range)
                    .and_then(|body| parse_payload(&body, req.variables, &req.label));
                *slots[k].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut frames = Vec::with_capacity(slots.len());
    for slot in slots {
        frames.push(slot.into_inner().expect("slot lock").expect("every request ran")?);
    }
    let reference = if spec.reference_variables.is_empty() {
        TimeFrame::new(frames[0].timestamps().to_vec(), vec![], vec![])?
    } else {
        let raw = frames.pop().expect("reference frame");
        let names = raw.names().iter().map(|n| format!("{REFERENCE_PREFIX}{n}")).collect();
        TimeFrame::new(raw.timestamps().to_vec(), names, raw.columns().to_vec())?
    };
    let fragments = points
        .iter()
        .zip(frames)
        .map(|(p, frame)| Fragment {
            row: p.row,
            col: p.col,
            coord: Some(p.coord),
            frame,
        })
        .collect();
    FetchBatch::from_fragments(fragments, reference, Utc::now(), spec.source_tag.clone())
}

/// Exact-key cache hit, or a fetch whose result is stored in the cache.
pub fn fetch_or_cached(spec: &SourceSpec, range: DateRange, cache: Option<&Cache>) -> Result<FetchBatch> {
    let key = CacheKey::new(spec, range);
    if let Some(cache) = cache {
        match cache.load(&key) {
            Ok(batch) => return Ok(batch),
            Err(IngestError::NotFound(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if spec.offline {
        return Err(IngestError::SourceUnavailable(format!(
            "offline and no cached batch for {}..{}",
            range.start, range.end
        )));
    }
    let batch = fetch_hourly(spec, range)?;
    if let Some(cache) = cache {
        cache.save(&key, &batch)?;
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn payload_with_nulls_marks_exactly_those_cells() {
        let body = r#"{"hourly":{"time":["2023-05-01T00:00","2023-05-01T01:00","2023-05-01T02:00","2023-05-01T03:00"],
            "a":[1.0,null,3.0,null],"b":[null,2,2,2]}}"#;
        let f = parse_payload(body, &vars(&["a", "b"]), "(0, 0)").unwrap();
        let mask = f.missing_mask();
        let missing: Vec<(usize, usize)> = (0..2)
            .flat_map(|c| (0..4).map(move |r| (c, r)))
            .filter(|&(c, r)| mask[c][r])
            .collect();
        assert_eq!(missing, vec![(0, 1), (0, 3), (1, 0)]);
        assert_eq!(f.value(2, 0), 3.0);
    }

    #[test]
    fn malformed_payload_names_the_coordinate() {
        let body = r#"{"hourly":{"time":["2023-05-01T00:00"],"a":["x"]}}"#;
        match parse_payload(body, &vars(&["a"]), "(1.0000, 2.0000)") {
            Err(IngestError::Parse { coordinate, .. }) => assert_eq!(coordinate, "(1.0000, 2.0000)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_payload(r#"{"hourly":{"time":[]}}"#, &vars(&["a"]), "c").is_err());
        assert!(parse_payload("not json", &vars(&["a"]), "c").is_err());
    }

    #[test]
    fn backoff_doubles_up_to_cap() {
        let r = RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        let d: Vec<u128> = (0..5).map(|k| r.delay(k).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 400, 500, 500]);
    }

    #[test]
    fn date_range_hours() {
        let d = NaiveDate::from_ymd_opt(2023, 5, 2).unwrap();
        let r = DateRange::ending(d, 2).unwrap();
        assert_eq!(r.start, NaiveDate::from_ymd_opt(2023, 5, 1).unwrap());
        assert_eq!(r.hours(), 48);
        assert!(DateRange::new(d, r.start).is_err());
    }

    #[test]
    fn history_must_cover_window_and_validation() {
        let grid = GridSpec {
            center: LatLon::new(42.36, -71.06),
            span_km: 300.0,
            points_per_side: 7,
        };
        let mut spec = SourceSpec::new("http://localhost", grid);
        spec.validate(3360, 10).unwrap();
        assert!(spec.validate(3600, 10).is_err());
        spec.history_days = 160;
        spec.validate(3600, 10).unwrap();
        spec.variables.clear();
        assert!(spec.validate(0, 0).is_err());
    }

    #[test]
    fn offline_forbids_fetch() {
        let grid = GridSpec {
            center: LatLon::new(0.0, 0.0),
            span_km: 0.0,
            points_per_side: 1,
        };
        let mut spec = SourceSpec::new("http://localhost:9", grid);
        spec.offline = true;
        let range = DateRange::ending(NaiveDate::from_ymd_opt(2023, 5, 2).unwrap(), 1).unwrap();
        assert!(matches!(fetch_hourly(&spec, range), Err(IngestError::SourceUnavailable(_))));
    }
}
