//! Versioned binary model file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "NCMODEL\0"
//! version    u32      currently 1
//! kind       u8       0 = gbt, 1 = mlp, 2 = external
//! meta_len   u64
//! meta       JSON     spec, scaler, target, shape, layout, n_features,
//!                     trained_at, report
//! payload    kind-specific, see below
//! ```
//!
//! gbt: `f64 learning_rate, u64 input_width, u32 horizon`, then per horizon
//! step `f64 base, u32 n_trees`, then per tree `u32 n_nodes` and per node
//! either `u8 0, f64 weight, u32 count` (leaf) or
//! `u8 1, u32 feature, f64 threshold, u32 left, u32 right` (split).
//!
//! mlp: `u32 n_layers`, then per layer `u32 inputs, u32 outputs`, the weights
//! row-major (`inputs × outputs` f64) and `outputs` f64 biases.
//!
//! external: `u32 horizon, u64 n_rows`, then per row `i64 unix seconds` and
//! `horizon` f64 values.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{
    Dense, ExternalPredictions, GbtModel, MlpModel, ModelState, RegressorSpec, TrainReport, TrainedModel, Tree,
    TreeNode,
};
use crate::error::{Error, Result};
use crate::timeseries::{Layout, ScalerParams, WindowShape};

pub const MAGIC: &[u8; 8] = b"NCMODEL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: RegressorSpec,
    scaler: ScalerParams,
    target: String,
    shape: WindowShape,
    layout: Layout,
    n_features: usize,
    trained_at: DateTime<Utc>,
    report: TrainReport,
}

fn io(e: std::io::Error) -> Error {
    Error::io("<model stream>", e)
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(io)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} exceeds u32")))?;
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: usize) -> Result<()> {
        self.bytes(&(v as u64).to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(io)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self, limit: u64) -> Result<usize> {
        let n = self.u64()?;
        if n > limit {
            return Err(Error::InvalidData(format!("length {n} exceeds limit {limit}")));
        }
        Ok(n as usize)
    }
}

pub fn write_model<W: Write>(model: &TrainedModel, writer: W) -> Result<()> {
    let mut w = Out(writer);
    w.bytes(MAGIC)?;
    w.bytes(&FORMAT_VERSION.to_le_bytes())?;
    w.u8(match model.state {
        ModelState::Gbt(_) => 0,
        ModelState::Mlp(_) => 1,
        ModelState::External(_) => 2,
    })?;
    let meta = Meta {
        spec: model.spec.clone(),
        scaler: model.scaler.clone(),
        target: model.target.clone(),
        shape: model.shape,
        layout: model.layout,
        n_features: model.n_features,
        trained_at: model.trained_at,
        report: model.report.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::InvalidData(e.to_string()))?;
    w.u64(json.len())?;
    w.bytes(&json)?;
    match &model.state {
        ModelState::Gbt(m) => {
            w.f64(m.learning_rate)?;
            w.u64(m.input_width)?;
            w.u32(m.base.len())?;
            for (base, trees) in m.base.iter().zip(&m.ensembles) {
                w.f64(*base)?;
                w.u32(trees.len())?;
                for tree in trees {
                    w.u32(tree.nodes.len())?;
                    for node in &tree.nodes {
                        match *node {
                            TreeNode::Leaf { weight, count } => {
                                w.u8(0)?;
                                w.f64(weight)?;
                                w.u32(count as usize)?;
                            }
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                w.u8(1)?;
                                w.u32(feature as usize)?;
                                w.f64(threshold)?;
                                w.u32(left as usize)?;
                                w.u32(right as usize)?;
                            }
                        }
                    }
                }
            }
        }
        ModelState::Mlp(m) => {
            w.u32(m.layers.len())?;
            for layer in &m.layers {
                w.u32(layer.weights.nrows())?;
                w.u32(layer.weights.ncols())?;
                for &v in layer.weights.iter() {
                    w.f64(v)?;
                }
                for &v in layer.bias.iter() {
                    w.f64(v)?;
                }
            }
        }
        ModelState::External(m) => {
            w.u32(m.horizon)?;
            w.u64(m.rows.len())?;
            for (ts, values) in &m.rows {
                w.bytes(&ts.timestamp().to_le_bytes())?;
                for &v in values {
                    w.f64(v)?;
                }
            }
        }
    }
    w.0.flush().map_err(io)
}

const MAX_LEN: u64 = 1 << 32;

pub fn read_model<R: Read>(reader: R) -> Result<TrainedModel> {
    let mut r = In(reader);
    if &r.array::<8>()? != MAGIC {
        return Err(Error::InvalidData("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::InvalidData(format!(
            "model format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let kind = r.u8()?;
    let meta_len = r.len(MAX_LEN)?;
    let mut json = vec![0u8; meta_len];
    r.0.read_exact(&mut json).map_err(io)?;
    let meta: Meta = serde_json::from_slice(&json).map_err(|e| Error::InvalidData(format!("model metadata: {e}")))?;
    let state = match kind {
        0 => {
            let learning_rate = r.f64()?;
            let input_width = r.len(MAX_LEN)?;
            let horizon = r.u32()? as usize;
            let mut base = Vec::with_capacity(horizon);
            let mut ensembles = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                base.push(r.f64()?);
                let n_trees = r.u32()?;
                let mut trees = Vec::new();
                for _ in 0..n_trees {
                    let n_nodes = r.u32()?;
                    let mut nodes = Vec::new();
                    for _ in 0..n_nodes {
                        nodes.push(match r.u8()? {
                            0 => TreeNode::Leaf {
                                weight: r.f64()?,
                                count: r.u32()?,
                            },
                            1 => TreeNode::Split {
                                feature: r.u32()?,
                                threshold: r.f64()?,
                                left: r.u32()?,
                                right: r.u32()?,
                            },
                            t => return Err(Error::InvalidData(format!("unknown tree node tag {t}"))),
                        });
                    }
                    validate_tree(&nodes, input_width)?;
                    trees.push(Tree { nodes });
                }
                ensembles.push(trees);
            }
            ModelState::Gbt(GbtModel {
                learning_rate,
                input_width,
                base,
                ensembles,
            })
        }
        1 => {
            let n_layers = r.u32()?;
            let mut layers = Vec::new();
            for _ in 0..n_layers {
                let rows = r.u32()? as usize;
                let cols = r.u32()? as usize;
                let mut weights = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
                for _ in 0..rows * cols {
                    weights.push(r.f64()?);
                }
                let mut bias = Vec::with_capacity(cols);
                for _ in 0..cols {
                    bias.push(r.f64()?);
                }
                layers.push(Dense {
                    weights: Array2::from_shape_vec((rows, cols), weights).expect("sized above"),
                    bias: Array1::from(bias),
                });
            }
            if layers.is_empty() || layers.windows(2).any(|p| p[0].weights.ncols() != p[1].weights.nrows()) {
                return Err(Error::InvalidData("inconsistent layer shapes".into()));
            }
            ModelState::Mlp(MlpModel { layers })
        }
        2 => {
            let horizon = r.u32()? as usize;
            let n = r.len(MAX_LEN)?;
            let mut rows = std::collections::BTreeMap::new();
            for _ in 0..n {
                let secs = i64::from_le_bytes(r.array()?);
                let ts = DateTime::from_timestamp(secs, 0)
                    .ok_or_else(|| Error::InvalidData(format!("timestamp {secs} out of range")))?;
                let values = (0..horizon).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                rows.insert(ts, values);
            }
            ModelState::External(ExternalPredictions { horizon, rows })
        }
        k => return Err(Error::InvalidData(format!("unknown model kind {k}"))),
    };
    Ok(TrainedModel {
        spec: meta.spec,
        scaler: meta.scaler,
        target: meta.target,
        shape: meta.shape,
        layout: meta.layout,
        n_features: meta.n_features,
        trained_at: meta.trained_at,
        report: meta.report,
        state,
    })
}

fn validate_tree(nodes: &[TreeNode], width: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidData("empty tree".into()));
    }
    for (i, node) in nodes.iter().enumerate() {
        if let TreeNode::Split { feature, left, right, .. } = *node {
            let ok = (feature as usize) < width
                && (left as usize) > i
                && (right as usize) > i
                && (left as usize) < nodes.len()
                && (right as usize) < nodes.len();
            if !ok {
                return Err(Error::InvalidData(format!("malformed split node {i}")));
            }
        }
    }
    Ok(())
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, std::io::BufWriter::new(file))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}
