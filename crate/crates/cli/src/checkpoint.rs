//! Model checkpoints: detector configuration plus named parameter tensors.
//!
//! Layout, little-endian: magic `RDCK`, `u16` version, `u32` length and JSON
//! text of the configuration, `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, a `u64` byte length and an RDLC tensor.

use std::fs;
use std::path::Path;

use radelft_core::neural::{DetectorConfig, DetectorModel, Tensor};

use crate::error::{FormatError, Result};
use crate::storage::{RawTensor, TensorData};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RDCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn to_bytes(model: &DetectorModel<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, p) in model.names.iter().zip(&model.params) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let t = RawTensor::new(p.shape.clone(), TensorData::F32(p.data.clone()))?.to_bytes();
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        out.extend_from_slice(&t);
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<DetectorModel<f32>> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| {
            FormatError::Truncated(format!("checkpoint ends at {} bytes, needed {n} more at {pos}", bytes.len()))
        })?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let magic: [u8; 4] = take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(FormatError::Magic { expected: CHECKPOINT_MAGIC, found: magic });
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::Version { found: version, supported: CHECKPOINT_VERSION });
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let cfg: DetectorConfig = serde_json::from_slice(take(n)?)?;
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut named = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(n)?.to_vec())
            .map_err(|_| FormatError::Invalid("tensor name is not UTF-8".into()))?;
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| FormatError::Truncated("tensor length overflows".into()))?;
        let raw = RawTensor::from_bytes(take(len)?)?;
        let shape = raw.shape.clone();
        named.push((name, Tensor::from_vec(&shape, raw.into_f32()?)?));
    }
    if pos != bytes.len() {
        return Err(FormatError::Shape(format!("{} trailing bytes in checkpoint", bytes.len() - pos)));
    }
    Ok(DetectorModel::from_params(&cfg, named)?)
}

pub fn save(path: &Path, model: &DetectorModel<f32>) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| FormatError::io(path, e))
}

pub fn load(path: &Path) -> Result<DetectorModel<f32>> {
    from_bytes(&fs::read(path).map_err(|e| FormatError::io(path, e))?)
}
