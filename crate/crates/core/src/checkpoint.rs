//! Single-file model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "GPINECKP"
//! 8 bytes   u64 manifest length M
//! M bytes   JSON manifest
//! rest      f32 tensor data, tensors back to back in manifest order
//! ```
//!
//! Tensor offsets in the manifest are byte offsets into the data section;
//! `checksum` is the SHA-256 of the data section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_bytes, sha256_hex, write_bytes};
use crate::model::{GraphPineModel, ModelConfig};
use crate::nn::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GPINECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub config: ModelConfig,
    /// Node count of the graph the model was trained on.
    pub graph_nodes: usize,
    pub tensors: Vec<TensorEntry>,
    pub checksum: String,
}

pub fn save_checkpoint(model: &GraphPineModel, graph_nodes: usize, path: &Path) -> Result<CheckpointManifest> {
    let mut data = Vec::with_capacity(model.params.numel() * 4);
    let mut tensors = Vec::new();
    for (name, t) in model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_owned(),
            shape: t.shape(),
            offset: data.len() as u64,
        });
        for &v in t.data() {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        config: model.config,
        graph_nodes,
        tensors,
        checksum: sha256_hex(&data),
    };
    let json = serde_json::to_vec(&manifest).expect("plain data");
    let mut bytes = Vec::with_capacity(16 + json.len() + data.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&data);
    write_bytes(path, &bytes)?;
    Ok(manifest)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptManifest(msg.into())
}

/// Reads a checkpoint, verifying magic, checksum and tensor shapes.
pub fn load_checkpoint(path: &Path) -> Result<(GraphPineModel, CheckpointManifest)> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt(format!("{}: not a checkpoint file", path.display())));
    }
    let m_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let data_start = 16usize
        .checked_add(usize::try_from(m_len).map_err(|_| corrupt("manifest length overflow"))?)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(format!("{}: truncated manifest", path.display())))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| corrupt(format!("{}: manifest: {e}", path.display())))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "checkpoint version {} (supported: {CHECKPOINT_VERSION})",
            manifest.version
        )));
    }
    let data = &bytes[data_start..];
    if sha256_hex(data) != manifest.checksum {
        return Err(corrupt(format!("{}: checksum mismatch", path.display())));
    }

    let template = GraphPineModel::zeros(manifest.config)?;
    check_shapes(&manifest.tensors, &template.params)?;
    let mut params = ParamStore::new();
    for e in &manifest.tensors {
        let n = e.shape[0] * e.shape[1];
        let start = usize::try_from(e.offset).map_err(|_| corrupt("offset overflow"))?;
        let chunk = start
            .checked_add(n * 4)
            .and_then(|end| data.get(start..end))
            .ok_or_else(|| corrupt(format!("tensor `{}` out of bounds", e.name)))?;
        let values = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        params.insert(e.name.clone(), Tensor::from_vec(e.shape[0], e.shape[1], values)?)?;
    }
    Ok((
        GraphPineModel {
            config: manifest.config,
            params,
        },
        manifest,
    ))
}

/// Loads a checkpoint and requires it to match `expected`'s tensor layout.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<(GraphPineModel, CheckpointManifest)> {
    let (model, manifest) = load_checkpoint(path)?;
    let template = GraphPineModel::zeros(*expected)?;
    check_shapes(&manifest.tensors, &template.params)?;
    Ok((model, manifest))
}

fn check_shapes(entries: &[TensorEntry], template: &ParamStore) -> Result<()> {
    for (name, t) in template.iter() {
        match entries.iter().find(|e| e.name == name) {
            None => return Err(Error::VersionMismatch(format!("checkpoint lacks tensor `{name}`"))),
            Some(e) if e.shape != t.shape() => {
                return Err(Error::VersionMismatch(format!(
                    "tensor `{name}`: checkpoint shape {:?}, expected {:?}",
                    e.shape,
                    t.shape()
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = entries.iter().find(|e| template.get(&e.name).is_none()) {
        return Err(Error::VersionMismatch(format!("unexpected tensor `{}`", extra.name)));
    }
    Ok(())
}
