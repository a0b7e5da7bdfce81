//! Acquisition of hourly meteorological features.
//!
//! [`fetch_hourly`] queries an OpenMeteo-compatible endpoint once per grid
//! point and merges the fragments into one grid-wide frame. [`load_replay`]
//! reads the same frame back from the replay CSV format, and [`Cache`] keeps
//! fetched batches on disk so repeated runs can work offline.

mod batch;
mod cache;
mod client;
mod error;
pub mod fixture_server;
mod live;
mod variables;

pub use batch::{load_replay, merge_fragments, save_replay, split_merged, FetchBatch, REPLAY_TAG};
pub use cache::{Cache, CacheKey};
pub use client::{fetch_hourly, fetch_or_cached, parse_payload, DateRange, RetryPolicy, SourceSpec};
pub use error::{IngestError, Result};
pub use live::{Clock, LiveSource, SystemClock};
pub use variables::{DEFAULT_VARIABLES, LABEL_VARIABLES};
