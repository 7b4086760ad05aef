//! Binary checkpoint: magic, JSON metadata, then little-endian f32 parameters.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{Network, NetworkShape};

pub const MAGIC: &[u8; 5] = b"PKMC1";

/// Everything needed to rebuild the evaluator except the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub shape: NetworkShape,
    pub steer_count: usize,
    pub step: f64,
    pub max_steer: f64,
    pub iteration: usize,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("invalid checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint stores {stored} parameters but its shape needs {expected}")]
    ParamCount { stored: usize, expected: usize },
    #[error("checkpoint shape {found:?} does not match the requested {expected:?}")]
    ShapeMismatch {
        expected: Box<NetworkShape>,
        found: Box<NetworkShape>,
    },
}

pub fn encode_checkpoint(network: &Network, meta: &CheckpointMeta) -> Vec<u8> {
    let json = serde_json::to_vec(meta).expect("metadata serializes");
    let params = network.params();
    let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, CheckpointMeta), CheckpointError> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4).map_err(|_| CheckpointError::Truncated)?;
    let mut json = vec![0u8; u32::from_le_bytes(len4) as usize];
    r.read_exact(&mut json).map_err(|_| CheckpointError::Truncated)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8).map_err(|_| CheckpointError::Truncated)?;
    let stored = u64::from_le_bytes(len8) as usize;
    let expected = meta.shape.param_count();
    if stored != expected {
        return Err(CheckpointError::ParamCount { stored, expected });
    }
    let rest = &bytes[r.position() as usize..];
    if rest.len() != 4 * stored {
        return Err(CheckpointError::Truncated);
    }
    let params = rest
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let net = Network::from_params(meta.shape.clone(), params).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    Ok((net, meta))
}

pub fn save_checkpoint(network: &Network, meta: &CheckpointMeta, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(network, meta)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and insists on a particular network shape.
pub fn load_checkpoint_for(path: &Path, expected: &NetworkShape) -> Result<(Network, CheckpointMeta), CheckpointError> {
    let (net, meta) = load_checkpoint(path)?;
    if &meta.shape != expected {
        return Err(CheckpointError::ShapeMismatch {
            expected: Box::new(expected.clone()),
            found: Box::new(meta.shape),
        });
    }
    Ok((net, meta))
}
