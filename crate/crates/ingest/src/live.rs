//! Hourly source backed by the HTTP client.

use std::time::Duration;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use nowcast_core::scheduler::{HourlySource, Poll};
use nowcast_core::timeseries::TimeFrame;

use crate::cache::{Cache, CacheKey};
use crate::client::{fetch_hourly, DateRange, SourceSpec};

pub trait Clock: Send {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

fn floor_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::hours(1)).expect("hour truncation")
}

/// Rows up to and including `until`.
fn rows_until(frame: &TimeFrame, until: DateTime<Utc>) -> TimeFrame {
    let n = frame.timestamps().partition_point(|&t| t <= until);
    frame.head(n)
}

/// Serves `history_days` of history, then blocks until each next hour is
/// published. After `max_retries` empty or failed polls the hour is reported
/// as a source error and the loop moves on.
pub struct LiveSource {
    spec: SourceSpec,
    clock: Box<dyn Clock>,
    cache: Option<Cache>,
    poll_interval: Duration,
    max_retries: u32,
    ticks: Option<usize>,
    delivered: usize,
    last: Option<DateTime<Utc>>,
}

impl LiveSource {
    pub fn new(spec: SourceSpec, clock: Box<dyn Clock>, poll_interval: Duration, max_retries: u32, ticks: Option<usize>) -> Self {
        Self {
            spec,
            clock,
            cache: None,
            poll_interval,
            max_retries,
            ticks,
            delivered: 0,
            last: None,
        }
    }

    /// Archives the history batch in `cache`.
    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.cache = Some(cache);
        self
    }
}

impl HourlySource for LiveSource {
    fn history(&mut self) -> nowcast_core::Result<TimeFrame> {
        let now = floor_hour(self.clock.now());
        let range = DateRange::ending(now.date_naive(), self.spec.history_days)?;
        let batch = fetch_hourly(&self.spec, range)?;
        if let Some(cache) = &self.cache {
            cache.save(&CacheKey::new(&self.spec, range), &batch)?;
        }
        let frame = rows_until(&batch.merged, now);
        if frame.is_empty() {
            return Err(nowcast_core::Error::InsufficientData("live history returned no past rows".into()));
        }
        self.last = frame.last_timestamp();
        Ok(frame)
    }

    fn poll(&mut self) -> nowcast_core::Result<Poll> {
        if self.ticks.is_some_and(|t| self.delivered >= t) {
            return Ok(Poll::Exhausted);
        }
        let last = self
            .last
            .ok_or_else(|| nowcast_core::Error::InvalidArgument("poll before history".into()))?;
        let target = last + TimeDelta::hours(1);
        let wait = (target - self.clock.now()).to_std().unwrap_or_default();
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
        let mut failure = String::from("no new row published");
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                self.clock.sleep(self.poll_interval);
            }
            let now = floor_hour(self.clock.now());
            let range = DateRange::ending(target.date_naive(), 1 + usize::from(target.date_naive() != last.date_naive()))?;
            match fetch_hourly(&self.spec, range) {
                Ok(batch) => {
                    let upto = rows_until(&batch.merged, now);
                    let start = upto.timestamps().partition_point(|&t| t <= last);
                    let fresh = upto.slice_rows(start..upto.n_rows());
                    if fresh.first_timestamp() == Some(target) {
                        self.last = fresh.last_timestamp();
                        self.delivered += 1;
                        return Ok(Poll::Rows(fresh));
                    }
                }
                Err(e) => failure = e.to_string(),
            }
        }
        // skip the hour so the next poll waits for the following one
        self.last = Some(target);
        self.delivered += 1;
        Err(nowcast_core::Error::Source(format!("{}: {failure}", target.to_rfc3339())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn rows_until_is_inclusive() {
        let t0 = Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap();
        let ts: Vec<_> = (0..5).map(|h| t0 + TimeDelta::hours(h)).collect();
        let f = TimeFrame::new(ts, vec!["a".into()], vec![vec![0.0; 5]]).unwrap();
        assert_eq!(rows_until(&f, t0 + TimeDelta::hours(2)).n_rows(), 3);
        assert_eq!(rows_until(&f, t0 - TimeDelta::hours(1)).n_rows(), 0);
        assert_eq!(floor_hour(t0 + TimeDelta::minutes(59)), t0);
    }
}
