//! Parameter checkpoints: a version-tagged named-tensor archive with
//! the producing model config embedded.
//!
//! File layout: 8-byte magic, little-endian u32 header length, a JSON
//! header (format version, config, dims, tasks, tensor index, config
//! hash), then the raw f64 little-endian payload in layout order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbones::{Model, ModelConfig};
use crate::datamodel::TaskSpec;
use crate::error::{Error, Result};
use crate::nn::ParamVec;
use crate::util::{fnv1a64, hex64};

const MAGIC: &[u8; 8] = b"AFCKPT01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    dims: (usize, usize, usize),
    tasks: Vec<TaskSpec>,
    tensors: Vec<TensorMeta>,
    config_hash: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub dims: (usize, usize, usize),
    pub tasks: Vec<TaskSpec>,
    pub tensors: Vec<TensorMeta>,
    pub values: Vec<f64>,
}

/// Stable hash of everything that determines a model's architecture.
pub fn config_hash(config: &ModelConfig, dims: (usize, usize, usize), tasks: &[TaskSpec]) -> String {
    let blob = serde_json::to_vec(&(config, dims, tasks)).expect("config serializes");
    hex64(fnv1a64(&blob))
}

impl Checkpoint {
    pub fn from_model(model: &Model, params: &ParamVec) -> Checkpoint {
        let tensors = model
            .layout
            .entries()
            .iter()
            .map(|e| TensorMeta {
                name: e.name.clone(),
                rows: e.rows,
                cols: e.cols,
                offset: e.offset,
            })
            .collect();
        Checkpoint {
            config: model.backbone.config.clone(),
            dims: model.backbone.dims,
            tasks: model.heads.iter().map(|h| h.task.clone()).collect(),
            tensors,
            values: params.data.clone(),
        }
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.config, self.dims, &self.tasks)
    }

    /// Rebuilds the model and installs the stored parameters, verifying
    /// that the stored tensor index matches the rebuilt layout.
    pub fn instantiate(&self) -> Result<(Model, ParamVec)> {
        let model = Model::build(&self.config, self.dims, &self.tasks)?;
        let entries = model.layout.entries();
        if entries.len() != self.tensors.len() {
            return Err(Error::CheckpointMismatch(format!(
                "tensor count {} vs rebuilt {}",
                self.tensors.len(),
                entries.len()
            )));
        }
        for (e, t) in entries.iter().zip(&self.tensors) {
            if e.name != t.name || e.rows != t.rows || e.cols != t.cols || e.offset != t.offset {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor `{}` does not match rebuilt layout entry `{}`",
                    t.name, e.name
                )));
            }
        }
        if self.values.len() != model.layout.total_len() {
            return Err(Error::CheckpointMismatch(format!(
                "parameter count {} vs layout {}",
                self.values.len(),
                model.layout.total_len()
            )));
        }
        let params = ParamVec {
            data: self.values.clone(),
        };
        Ok((model, params))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            dims: self.dims,
            tasks: self.tasks.clone(),
            tensors: self.tensors.clone(),
            config_hash: self.config_hash(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut blob = Vec::with_capacity(12 + header_bytes.len() + self.values.len() * 8);
        blob.extend_from_slice(MAGIC);
        blob.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        blob.extend_from_slice(&header_bytes);
        for v in &self.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, blob)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let blob = fs::read(path)?;
        let file = path.display().to_string();
        if blob.len() < 12 || &blob[..8] != MAGIC {
            return Err(Error::CheckpointMismatch(format!("{file}: bad magic")));
        }
        let header_len = u32::from_le_bytes([blob[8], blob[9], blob[10], blob[11]]) as usize;
        if blob.len() < 12 + header_len {
            return Err(Error::TruncatedPayload {
                file,
                needed: (12 + header_len) as u64,
                available: blob.len() as u64,
            });
        }
        let header: Header = serde_json::from_slice(&blob[12..12 + header_len])?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: header.format_version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let payload = &blob[12 + header_len..];
        if payload.len() % 8 != 0 {
            return Err(Error::TruncatedPayload {
                file,
                needed: (12 + header_len + payload.len().next_multiple_of(8)) as u64,
                available: blob.len() as u64,
            });
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected = config_hash(&header.config, header.dims, &header.tasks);
        if expected != header.config_hash {
            return Err(Error::CheckpointMismatch(format!(
                "{file}: stored config hash {} but recomputed {expected}",
                header.config_hash
            )));
        }
        Ok(Checkpoint {
            config: header.config,
            dims: header.dims,
            tasks: header.tasks,
            tensors: header.tensors,
            values,
        })
    }
}
