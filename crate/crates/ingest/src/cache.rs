//! Content-addressed batch cache.
//!
//! ```text
//! <dir>/objects/<sha256 of csv>.csv   merged frame in replay format
//! <dir>/index/<sha256 of key>.json    key, object hash, batch metadata
//! ```
//!
//! Identical content is stored once however many keys point at it. Writes
//! go through a temporary file and a rename, so readers never see a partial
//! object or index entry.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use nowcast_core::timeseries::{read_replay, write_replay, LatLon};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::FetchBatch;
use crate::client::{DateRange, SourceSpec};
use crate::error::{IngestError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub source_tag: String,
    pub grid_hash: String,
    pub variables_hash: String,
    pub range: DateRange,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl CacheKey {
    pub fn new(spec: &SourceSpec, range: DateRange) -> Self {
        let g = &spec.grid;
        let grid = format!(
            "{:016x}:{:016x}:{:016x}:{}",
            g.center.latitude.to_bits(),
            g.center.longitude.to_bits(),
            g.span_km.to_bits(),
            g.points_per_side
        );
        let vars = format!("{}|{}", spec.variables.join(","), spec.reference_variables.join(","));
        Self {
            source_tag: spec.source_tag.clone(),
            grid_hash: sha_hex(grid.as_bytes()),
            variables_hash: sha_hex(vars.as_bytes()),
            range,
        }
    }

    fn digest(&self) -> String {
        sha_hex(serde_json::to_string(self).expect("key serializes").as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    key: CacheKey,
    object: String,
    fetched_at: DateTime<Utc>,
    source_tag: String,
    coords: Vec<Option<LatLon>>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| IngestError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| IngestError::io(path, e))
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        for sub in ["objects", "index"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| IngestError::io(&p, e))?;
        }
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn object_path(&self, hash: &str) -> PathBuf {
        self.dir.join("objects").join(format!("{hash}.csv"))
    }

    fn index_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join("index").join(format!("{}.json", key.digest()))
    }

    /// Stores the batch under `key`; returns the object path.
    pub fn save(&self, key: &CacheKey, batch: &FetchBatch) -> Result<PathBuf> {
        let mut csv = Vec::new();
        write_replay(&batch.merged, &mut csv)?;
        let hash = sha_hex(&csv);
        let object = self.object_path(&hash);
        if !object.exists() {
            write_atomic(&object, &csv)?;
        }
        let entry = IndexEntry {
            key: key.clone(),
            object: hash,
            fetched_at: batch.fetched_at,
            source_tag: batch.source_tag.clone(),
            coords: batch.fragments.iter().map(|f| f.coord).collect(),
        };
        let json = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        write_atomic(&self.index_path(key), &json)?;
        Ok(object)
    }

    /// Exact-key lookup; anything else is `NotFound`.
    pub fn load(&self, key: &CacheKey) -> Result<FetchBatch> {
        let index = self.index_path(key);
        let text = match std::fs::read(&index) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(IngestError::NotFound(format!(
                    "{} {}..{}",
                    key.source_tag, key.range.start, key.range.end
                )))
            }
            Err(e) => return Err(IngestError::io(&index, e)),
        };
        let entry: IndexEntry = serde_json::from_slice(&text)
            .map_err(|e| nowcast_core::Error::Parse {
                location: index.display().to_string(),
                message: e.to_string(),
            })?;
        if &entry.key != key {
            return Err(IngestError::NotFound("index digest collision".into()));
        }
        let object = self.object_path(&entry.object);
        let bytes = std::fs::read(&object).map_err(|e| IngestError::io(&object, e))?;
        if sha_hex(&bytes) != entry.object {
            return Err(nowcast_core::Error::InvalidData(format!("cache object {} is corrupt", object.display())).into());
        }
        let merged = read_replay(bytes.as_slice())?;
        let mut batch = FetchBatch::from_merged(merged, entry.fetched_at, entry.source_tag)?;
        if entry.coords.len() == batch.fragments.len() {
            for (f, c) in batch.fragments.iter_mut().zip(entry.coords) {
                f.coord = c;
            }
        }
        Ok(batch)
    }

    pub fn object_count(&self) -> Result<usize> {
        let dir = self.dir.join("objects");
        let entries = std::fs::read_dir(&dir).map_err(|e| IngestError::io(&dir, e))?;
        Ok(entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
            .count())
    }
}
