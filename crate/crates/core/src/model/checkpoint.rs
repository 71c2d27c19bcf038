//! Versioned binary checkpoints.
//!
//! Layout: magic `HMCK`, format version (u32 LE), header length (u64 LE), a
//! JSON header, then the little-endian payload. The header carries free-form
//! metadata (for example the model configuration) and one entry per tensor
//! with its name, shape, dtype, payload offset and length, and SHA-256 digest.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::TensorMap;
use crate::tensor::{DType, Scalar, Tensor};

use super::{HybridConfig, HybridModel};

pub const MAGIC: &[u8; 4] = b"HMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
    pub len: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: serde_json::Value,
    pub entries: Vec<TensorEntry>,
    pub payload_len: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `tensors` with `meta` into checkpoint bytes.
pub fn encode<S: Scalar>(meta: serde_json::Value, tensors: &TensorMap<S>) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let bytes = t.to_le_bytes();
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: S::DTYPE,
            offset: payload.len() as u64,
            len: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        payload.extend_from_slice(&bytes);
    }
    let manifest = Manifest {
        meta,
        entries,
        payload_len: payload.len() as u64,
    };
    let header = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses only the header.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, usize)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::CheckpointFormat("missing magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or(Error::CheckpointTruncated {
            expected: header_len as u64 + 16,
            found: bytes.len() as u64,
        })?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..start])?;
    Ok((manifest, start))
}

/// Parses checkpoint bytes, verifying every tensor's length and digest.
pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<(serde_json::Value, TensorMap<S>)> {
    let (manifest, start) = decode_manifest(bytes)?;
    let payload = &bytes[start..];
    if (payload.len() as u64) < manifest.payload_len {
        return Err(Error::CheckpointTruncated {
            expected: manifest.payload_len,
            found: payload.len() as u64,
        });
    }
    if payload.len() as u64 != manifest.payload_len {
        return Err(Error::CheckpointFormat(format!(
            "payload has {} bytes, manifest declares {}",
            payload.len(),
            manifest.payload_len
        )));
    }
    let mut map = TensorMap::new();
    for e in &manifest.entries {
        if e.dtype != S::DTYPE {
            return Err(Error::CheckpointFormat(format!(
                "tensor {} stored as {:?}, requested {:?}",
                e.name,
                e.dtype,
                S::DTYPE
            )));
        }
        let end = e.offset.checked_add(e.len).filter(|&end| end <= manifest.payload_len);
        let Some(end) = end else {
            return Err(Error::CheckpointTruncated {
                expected: e.offset.saturating_add(e.len),
                found: manifest.payload_len,
            });
        };
        let chunk = &payload[e.offset as usize..end as usize];
        if sha256_hex(chunk) != e.sha256 {
            return Err(Error::CheckpointChecksum { name: e.name.clone() });
        }
        map.insert(e.name.clone(), Arc::new(Tensor::from_le_bytes(&e.shape, chunk)?));
    }
    Ok((manifest.meta, map))
}

/// Writes a checkpoint and returns the SHA-256 of the file.
pub fn write<S: Scalar>(path: &Path, meta: serde_json::Value, tensors: &TensorMap<S>) -> Result<String> {
    let bytes = encode(meta, tensors)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn read<S: Scalar>(path: &Path) -> Result<(serde_json::Value, TensorMap<S>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    config: HybridConfig,
}

impl<S: Scalar> HybridModel<S> {
    /// Saves configuration and parameters; returns the file's SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let meta = serde_json::to_value(ModelMeta {
            kind: "hybrid_model".into(),
            config: self.cfg.clone(),
        })?;
        write(path, meta, &self.to_map())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, map) = read::<S>(path)?;
        let meta: ModelMeta = serde_json::from_value(meta)?;
        Self::from_map(&meta.config, &map)
    }
}
