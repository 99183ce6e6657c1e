//! JSON parameter container: names, shapes and base64 little-endian `f32` payloads.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::numcore::params::ParamStore;
use crate::numcore::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "fgse-ckpt-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    hyperparameters: serde_json::Value,
    params: Vec<ParamRecord>,
}

fn encode_f32(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f32(name: &str, payload: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| FgseError::Checkpoint(format!("parameter {name}: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(FgseError::Checkpoint(format!(
            "parameter {name}: payload length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn checkpoint_to_string(params: &ParamStore, hyperparameters: serde_json::Value) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        hyperparameters,
        params: params
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: encode_f32(t.data()),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<(ParamStore, serde_json::Value)> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| FgseError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(FgseError::Checkpoint(format!(
            "unsupported format tag {:?}, expected {CHECKPOINT_FORMAT:?}",
            file.format
        )));
    }
    let mut store = ParamStore::new();
    for rec in file.params {
        let data = decode_f32(&rec.name, &rec.data)?;
        let t =
            Tensor::new(rec.shape, data).map_err(|e| FgseError::Checkpoint(format!("parameter {}: {e}", rec.name)))?;
        store.insert(rec.name, t)?;
    }
    Ok((store, file.hyperparameters))
}

pub fn save_checkpoint(path: &Path, params: &ParamStore, hyperparameters: serde_json::Value) -> Result<()> {
    let text = checkpoint_to_string(params, hyperparameters)?;
    fs::write(path, text).map_err(|e| FgseError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let text = fs::read_to_string(path).map_err(|e| FgseError::io(path, e))?;
    checkpoint_from_str(&text)
}
