//! Checkpoint layout: the magic `HKGFCKPT`, a little-endian `u64` header
//! length, a JSON header (spec and tensor shapes) and the tensors as
//! little-endian `f64` in header order.

use std::path::Path;

use hkgf_core::training::{Model, ModelSpec};
use hkgf_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 8] = b"HKGFCKPT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub tensors: Vec<TensorHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            spec: model.spec.clone(),
            tensors: model
                .store
                .names()
                .iter()
                .cloned()
                .zip(model.store.values().iter().cloned())
                .collect(),
        }
    }

    /// Rebuilds the model; every tensor of its `ModelSpec` must be present.
    pub fn into_model(self) -> Result<Model> {
        let mut model = Model::new(self.spec, 0)?;
        let n = model.import_weights(self.tensors.iter().map(|(n, m)| (n.as_str(), m)))?;
        if n != model.store.len() {
            return Err(CliError::Invalid(format!(
                "checkpoint holds {n} of {} model tensors",
                model.store.len()
            )));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format_version: 1,
            spec: self.spec.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorHeader {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|(_, m)| m.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &self.tensors {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: &str| CliError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
        let mut at = 16 + len;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for t in header.tensors {
            let n = t.rows * t.cols;
            let raw = bytes.get(at..at + 8 * n).ok_or_else(|| bad("truncated payload"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            at += 8 * n;
            tensors.push((t.name, Matrix::from_vec(t.rows, t.cols, data)?));
        }
        if at != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            spec: header.spec,
            tensors,
        })
    }

    pub fn save(&self, path: &Path, force: bool) -> Result<()> {
        write_atomic(path, &self.to_bytes(), force)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
