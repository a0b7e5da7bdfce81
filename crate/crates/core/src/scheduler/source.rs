use crate::error::{Error, Result};
use crate::timeseries::TimeFrame;

pub enum Poll {
    /// One or more new hourly rows (live sources may catch up after a gap).
    Rows(TimeFrame),
    Exhausted,
}

/// Raw hourly rows for one city.
pub trait HourlySource: Send {
    /// Warm-up history, loaded once before the first tick.
    fn history(&mut self) -> Result<TimeFrame>;

    /// Blocks until the next hour is available. A [`Error::Source`] is logged
    /// as a gap and the tick is skipped.
    fn poll(&mut self) -> Result<Poll>;
}

/// Replays a recorded frame: the first `warmup` rows are history, then one
/// row per tick.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frame: TimeFrame,
    warmup: usize,
    cursor: usize,
    end: usize,
}

impl ReplaySource {
    pub fn new(frame: TimeFrame, warmup_hours: Option<usize>, ticks: Option<usize>) -> Result<Self> {
        let n = frame.n_rows();
        let warmup = match (warmup_hours, ticks) {
            (Some(w), _) => w,
            (None, Some(t)) => n.checked_sub(t).ok_or_else(|| {
                Error::Config(format!("replay has {n} rows, fewer than {t} ticks"))
            })?,
            (None, None) => {
                return Err(Error::Config(
                    "replay clock needs `warmup_hours` or `ticks`".into(),
                ))
            }
        };
        if warmup == 0 || warmup > n {
            return Err(Error::InsufficientData(format!(
                "replay has {n} rows, cannot warm up on {warmup}"
            )));
        }
        let end = match ticks {
            Some(t) => (warmup + t).min(n),
            None => n,
        };
        Ok(Self {
            frame,
            warmup,
            cursor: warmup,
            end,
        })
    }

    pub fn remaining(&self) -> usize {
        self.end - self.cursor
    }
}

impl HourlySource for ReplaySource {
    fn history(&mut self) -> Result<TimeFrame> {
        Ok(self.frame.head(self.warmup))
    }

    fn poll(&mut self) -> Result<Poll> {
        if self.cursor >= self.end {
            return Ok(Poll::Exhausted);
        }
        let row = self.frame.slice_rows(self.cursor..self.cursor + 1);
        self.cursor += 1;
        Ok(Poll::Rows(row))
    }
}
