//! `nowcast` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration or usage error,
//! 3 data source unavailable, 4 insufficient data. Diagnostics go to stderr;
//! tables and data go to stdout.

mod args;
mod commands;
mod error;

pub use args::{Cli, Command, GlobalArgs, SynthKind};
pub use commands::{apply_overrides, load_config, run, source_spec};
pub use error::{CliError, EXIT_CONFIG, EXIT_INSUFFICIENT, EXIT_RUNTIME, EXIT_SOURCE};
