use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Cost-aware adaptive nowcasting experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment TOML file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides every model, bootstrap and generator seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Forbids network access; fetches are served from the cache only.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Power rating used to convert wall time to energy.
    #[arg(long, global = true, value_name = "W")]
    pub watts: Option<f64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Gridded hourly weather with a reference forecast column.
    Weather,
    /// i.i.d. standard normal features.
    Gaussian,
    /// AR(1) features with a linear target.
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Downloads history for every configured city into replay CSVs.
    Fetch {
        #[arg(long, value_name = "YYYY-MM-DD", requires = "end", conflicts_with = "days")]
        start: Option<NaiveDate>,
        #[arg(long, value_name = "YYYY-MM-DD")]
        end: Option<NaiveDate>,
        /// Days ending on `--end` (default: each city's history_days).
        #[arg(long)]
        days: Option<usize>,
        /// Cache directory (default: `[source] cache_dir`, else `<out>/cache`).
        #[arg(long, value_name = "DIR")]
        cache: Option<PathBuf>,
    },
    /// Runs the experiment over the configured replay files.
    Run,
    /// Runs the experiment against the live HTTP source.
    LiveRun {
        /// Hourly ticks after warm-up (default: `[clock] ticks`).
        #[arg(long)]
        ticks: Option<usize>,
    },
    /// Checks a saved model for drift on a city's most recent rows.
    DriftCheck {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long)]
        city: Option<String>,
        /// Last row to use (RFC 3339); default the end of the replay.
        #[arg(long, value_name = "TIMESTAMP")]
        at: Option<String>,
    },
    /// Computes the Ψ curve and the variance-horizon window for a city.
    Horizon {
        #[arg(long)]
        city: Option<String>,
        /// Replay file to use instead of the config's cities.
        #[arg(long, value_name = "PATH", conflicts_with = "city")]
        replay: Option<PathBuf>,
        #[arg(long, value_name = "TIMESTAMP")]
        at: Option<String>,
        /// Plateau threshold override (`inf` accepts the first evaluable
        /// window).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_window: Option<usize>,
    },
    /// Recomputes metrics and report files from an experiment log.
    Report {
        /// Log to read (default `<out>/log.ndjson`).
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
    },
    /// Writes a synthetic replay CSV.
    Synth {
        #[arg(long, value_enum, default_value = "weather")]
        kind: SynthKind,
        /// Length in days (weather) or hours (gaussian, linear).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 10)]
        features: usize,
        #[arg(long, default_value_t = 1)]
        points_per_side: usize,
        /// Row index from which a regime shift applies.
        #[arg(long)]
        shift_at: Option<usize>,
        /// Output file (default `<out>/synth.csv`).
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}
