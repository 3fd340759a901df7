//! Checkpoint container: magic "SGQA", a version word, a JSON header
//! listing `{path, shape, byte_offset}` per tensor, then the raw
//! little-endian f64 payloads. Loading validates the total length.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::array::Array;

pub const MAGIC: &[u8; 4] = b"SGQA";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, not a checkpoint container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("corrupt header: {0}")]
    BadHeader(String),
    #[error("payload length mismatch: header says {expected} bytes, file has {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    path: String,
    shape: Vec<usize>,
    byte_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    tensors: Vec<TensorEntry>,
}

/// Write named arrays in path order.
pub fn save(path: &Path, tensors: &BTreeMap<String, Array>) -> Result<(), CheckpointError> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    for (name, arr) in tensors {
        entries.push(TensorEntry {
            path: name.clone(),
            shape: vec![arr.rows(), arr.cols()],
            byte_offset: offset,
        });
        offset += arr.numel() * 8;
    }
    let header = serde_json::to_vec(&Header { tensors: entries })
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(header.len() as u64).to_le_bytes())?;
    file.write_all(&header)?;
    let mut payload = Vec::with_capacity(offset);
    for arr in tensors.values() {
        for &v in arr.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&payload)?;
    Ok(())
}

/// Read a container back into path-keyed arrays.
pub fn load(path: &Path) -> Result<BTreeMap<String, Array>, CheckpointError> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;

    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(CheckpointError::BadHeader("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let payload = &bytes[16 + header_len..];

    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 8)
        .sum();
    if payload.len() != expected {
        return Err(CheckpointError::LengthMismatch {
            expected,
            got: payload.len(),
        });
    }

    let mut out = BTreeMap::new();
    for entry in &header.tensors {
        if entry.shape.len() != 2 {
            return Err(CheckpointError::BadHeader(format!(
                "tensor {} has {}-d shape",
                entry.path,
                entry.shape.len()
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let end = entry.byte_offset + numel * 8;
        if end > payload.len() {
            return Err(CheckpointError::LengthMismatch {
                expected: end,
                got: payload.len(),
            });
        }
        let raw = &payload[entry.byte_offset..end];
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.insert(
            entry.path.clone(),
            Array::from_vec(entry.shape[0], entry.shape[1], data),
        );
    }
    Ok(out)
}
