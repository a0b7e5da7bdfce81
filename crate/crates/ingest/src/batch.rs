use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use nowcast_core::scheduler::REFERENCE_PREFIX;
use nowcast_core::timeseries::{load_replay_frame, LatLon, TimeFrame};

use crate::error::{IngestError, Result};

pub const REPLAY_TAG: &str = "replay";

/// Rows of one grid point; columns are bare variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub row: usize,
    pub col: usize,
    pub coord: Option<LatLon>,
    pub frame: TimeFrame,
}

impl Fragment {
    pub fn suffix(&self) -> String {
        format!("_{}_{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchBatch {
    pub fragments: Vec<Fragment>,
    /// `ref_<variable>` columns, aligned with `merged`.
    pub reference: TimeFrame,
    /// Grid-wide frame: `<variable>_<row>_<col>` columns, variable-major,
    /// followed by the reference columns.
    pub merged: TimeFrame,
    pub fetched_at: DateTime<Utc>,
    pub source_tag: String,
}

impl FetchBatch {
    pub fn from_fragments(
        fragments: Vec<Fragment>,
        reference: TimeFrame,
        fetched_at: DateTime<Utc>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let merged = merge_fragments(&fragments, &reference)?;
        Ok(Self {
            fragments,
            reference,
            merged,
            fetched_at,
            source_tag: source_tag.into(),
        })
    }

    /// Rebuilds fragments from a merged frame.
    pub fn from_merged(merged: TimeFrame, fetched_at: DateTime<Utc>, source_tag: impl Into<String>) -> Result<Self> {
        let (fragments, reference) = split_merged(&merged)?;
        Ok(Self {
            fragments,
            reference,
            merged,
            fetched_at,
            source_tag: source_tag.into(),
        })
    }
}

/// Joins per-point fragments on their shared timestamps. Fragments must
/// cover identical hours and carry identical variables.
pub fn merge_fragments(fragments: &[Fragment], reference: &TimeFrame) -> Result<TimeFrame> {
    let first = fragments
        .first()
        .ok_or_else(|| nowcast_core::Error::InvalidArgument("no fragments to merge".into()))?;
    let ts = first.frame.timestamps().to_vec();
    let vars = first.frame.names().to_vec();
    for f in fragments {
        if f.frame.timestamps() != ts.as_slice() {
            return Err(nowcast_core::Error::InvalidData(format!(
                "fragment{} covers different hours than fragment{}",
                f.suffix(),
                first.suffix()
            ))
            .into());
        }
        if f.frame.names() != vars.as_slice() {
            return Err(nowcast_core::Error::SchemaMismatch(format!("fragment{} has different variables", f.suffix())).into());
        }
    }
    let mut names = Vec::with_capacity(vars.len() * fragments.len() + reference.n_cols());
    let mut columns = Vec::with_capacity(names.capacity());
    for (v, var) in vars.iter().enumerate() {
        for f in fragments {
            names.push(format!("{var}{}", f.suffix()));
            columns.push(f.frame.column_at(v).to_vec());
        }
    }
    if reference.n_cols() > 0 {
        if reference.timestamps() != ts.as_slice() {
            return Err(nowcast_core::Error::InvalidData("reference covers different hours than the grid".into()).into());
        }
        for (c, name) in reference.names().iter().enumerate() {
            names.push(name.clone());
            columns.push(reference.column_at(c).to_vec());
        }
    }
    Ok(TimeFrame::new(ts, names, columns)?)
}

fn parse_suffixed(name: &str) -> Option<(&str, usize, usize)> {
    let (rest, col) = name.rsplit_once('_')?;
    let (var, row) = rest.rsplit_once('_')?;
    Some((var, row.parse().ok()?, col.parse().ok()?))
}

/// Inverse of [`merge_fragments`].
pub fn split_merged(merged: &TimeFrame) -> Result<(Vec<Fragment>, TimeFrame)> {
    let mut points: BTreeMap<(usize, usize), (Vec<String>, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut ref_names = Vec::new();
    let mut ref_cols = Vec::new();
    for (c, name) in merged.names().iter().enumerate() {
        if name.starts_with(REFERENCE_PREFIX) {
            ref_names.push(name.clone());
            ref_cols.push(merged.column_at(c).to_vec());
            continue;
        }
        let (var, row, col) = parse_suffixed(name).ok_or_else(|| {
            nowcast_core::Error::SchemaMismatch(format!("column `{name}` lacks a `_<row>_<col>` grid suffix"))
        })?;
        let entry = points.entry((row, col)).or_default();
        entry.0.push(var.to_string());
        entry.1.push(merged.column_at(c).to_vec());
    }
    let ts = merged.timestamps().to_vec();
    let fragments = points
        .into_iter()
        .map(|((row, col), (names, cols))| {
            Ok(Fragment {
                row,
                col,
                coord: None,
                frame: TimeFrame::new(ts.clone(), names, cols)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = TimeFrame::new(ts, ref_names, ref_cols)?;
    Ok((fragments, reference))
}

pub fn save_replay(batch: &FetchBatch, path: &Path) -> Result<()> {
    Ok(nowcast_core::timeseries::save_replay(&batch.merged, path)?)
}

/// Reads a replay CSV; `fetched_at` is the file's modification time.
pub fn load_replay(path: &Path) -> Result<FetchBatch> {
    let merged = load_replay_frame(path)?;
    let fetched_at = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .map(DateTime::<Utc>::from)
        .map_err(|e| IngestError::io(path, e))?;
    FetchBatch::from_merged(merged, fetched_at, REPLAY_TAG)
}
