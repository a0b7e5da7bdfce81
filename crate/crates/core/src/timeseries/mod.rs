//! Time-series data model: frames, preprocessing, scaling, hour encoding,
//! supervised windowing and the replay CSV format.

mod csv_io;
mod frame;
mod grid;
mod preprocess;
mod scale;
mod window;

pub use csv_io::{
    format_timestamp, load_replay_frame, parse_timestamp, read_replay, save_replay, write_replay,
    TIMESTAMP_COLUMN,
};
pub use frame::{one_hour, TimeFrame};
pub use grid::{build_grid, GridPoint, GridSpec, LatLon, EARTH_RADIUS_KM};
pub use preprocess::{
    drop_incomplete_rows, drop_sparse_features, encode_hour, population_variance,
    split_at_validation_rows, split_train_validation, variance_filter, with_hour_encoding,
    DEFAULT_MAX_MISSING, DEFAULT_VALIDATION_DAYS, DEFAULT_VARIANCE_EPS, HOUR_COS, HOUR_SIN,
};
pub use scale::{minmax_fit, minmax_inverse, minmax_transform, ColumnScale, ScalerParams};
pub use window::{
    latest_input, make_windows, Layout, WindowShape, WindowedDataset, DEFAULT_HORIZON,
    DEFAULT_LOOKBACK,
};
