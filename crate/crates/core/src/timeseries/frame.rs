use std::collections::HashSet;
use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Hourly, timestamp-indexed feature table.
///
/// Values are stored column-major. A missing cell is stored as `NaN`; use
/// [`TimeFrame::is_missing`] or [`TimeFrame::missing_mask`] rather than
/// comparing values directly.
#[derive(Debug, Clone)]
pub struct TimeFrame {
    timestamps: Vec<DateTime<Utc>>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

// Missing cells compare equal to each other.
impl PartialEq for TimeFrame {
    fn eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.names == other.names
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            })
    }
}

pub fn one_hour() -> Duration {
    Duration::hours(1)
}

impl TimeFrame {
    /// Builds a frame, validating equal column lengths, unique names and
    /// strictly increasing timestamps.
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column `{name}`")));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != timestamps.len() {
                return Err(Error::SchemaMismatch(format!(
                    "column `{name}` has {} values for {} timestamps",
                    col.len(),
                    timestamps.len()
                )));
            }
        }
        if let Some(pos) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!(
                "timestamps not strictly increasing at row {} ({})",
                pos + 1,
                timestamps[pos + 1].to_rfc3339()
            )));
        }
        Ok(Self {
            timestamps,
            names,
            columns,
        })
    }

    pub fn empty(names: Vec<String>) -> Result<Self> {
        let columns = vec![Vec::new(); names.len()];
        Self::new(Vec::new(), names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty() || self.names.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn first_timestamp(&self) -> Option<DateTime<Utc>> {
        self.timestamps.first().copied()
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        self.timestamps.last().copied()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col][row].is_nan()
    }

    /// Per-cell missing indicator, column-major like the values.
    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|v| v.is_nan()).collect())
            .collect()
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.columns[col].iter().filter(|v| v.is_nan()).count()
    }

    pub fn row_is_complete(&self, row: usize) -> bool {
        self.columns.iter().all(|c| !c[row].is_nan())
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.iter().any(|v| v.is_nan()))
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// True when every consecutive pair of timestamps is exactly one hour apart.
    pub fn is_hourly_contiguous(&self) -> bool {
        self.timestamps.windows(2).all(|w| w[1] - w[0] == one_hour())
    }

    /// Keeps the columns at `indices`, in the given order.
    pub fn select_indices(&self, indices: &[usize]) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let indices = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::SchemaMismatch(format!("no column `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_indices(&indices))
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }

    /// Last `n` rows (or the whole frame when shorter).
    pub fn tail(&self, n: usize) -> Self {
        let start = self.n_rows().saturating_sub(n);
        self.slice_rows(start..self.n_rows())
    }

    /// First `n` rows (or the whole frame when shorter).
    pub fn head(&self, n: usize) -> Self {
        self.slice_rows(0..n.min(self.n_rows()))
    }

    /// Appends one row; the timestamp must be later than the current last one.
    pub fn push_row(&mut self, timestamp: DateTime<Utc>, values: &[f64]) -> Result<()> {
        if values.len() != self.n_cols() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, frame has {} columns",
                values.len(),
                self.n_cols()
            )));
        }
        if let Some(last) = self.last_timestamp() {
            if timestamp <= last {
                return Err(Error::InvalidData(format!(
                    "row at {} does not follow {}",
                    timestamp.to_rfc3339(),
                    last.to_rfc3339()
                )));
            }
        }
        self.timestamps.push(timestamp);
        for (col, &v) in self.columns.iter_mut().zip(values) {
            col.push(v);
        }
        Ok(())
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.column_index(&name).is_some() {
            return Err(Error::SchemaMismatch(format!("duplicate column `{name}`")));
        }
        if values.len() != self.n_rows() {
            return Err(Error::SchemaMismatch(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn position_of(&self, timestamp: DateTime<Utc>) -> Option<usize> {
        self.timestamps.binary_search(&timestamp).ok()
    }

    /// Row-major copy of the given columns over `rows`.
    pub fn to_row_major(&self, rows: Range<usize>, cols: &[usize]) -> Array2<f64> {
        let n = rows.len();
        let mut out = Array2::zeros((n, cols.len()));
        for (j, &c) in cols.iter().enumerate() {
            let column = &self.columns[c][rows.clone()];
            for (i, &v) in column.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Row-major copy of all columns.
    pub fn to_matrix(&self) -> Array2<f64> {
        let cols: Vec<usize> = (0..self.n_cols()).collect();
        self.to_row_major(0..self.n_rows(), &cols)
    }

    pub(crate) fn from_parts_unchecked(
        timestamps: Vec<DateTime<Utc>>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == timestamps.len()));
        Self {
            timestamps,
            names,
            columns,
        }
    }
}
