//! Checkpoint file: one line of compact JSON (the header), a `\n`, then every
//! store entry's values as little-endian `f64` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::nn::Tensor;

pub const CHECKPOINT_FORMAT: &str = "flowpat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub model_type: String,
    pub architecture: serde_json::Value,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl CheckpointHeader {
    pub fn new(
        model_type: &str,
        architecture: serde_json::Value,
        store: &ParamStore,
        metadata: serde_json::Value,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model_type: model_type.into(),
            architecture,
            params: store
                .iter()
                .map(|(_, p)| ParamEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    trainable: p.requires_grad,
                })
                .collect(),
            metadata,
        }
    }
}

pub fn encode_checkpoint(header: &CheckpointHeader, store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for (_, p) in store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<Tensor>)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Contract("checkpoint has no header terminator".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..split])?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Contract(format!("not a checkpoint: format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Contract(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let mut body = &bytes[split + 1..];
    let mut tensors = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        if body.len() < n * 8 {
            return Err(Error::Contract(format!("checkpoint truncated in {}", entry.name)));
        }
        let data = body[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        body = &body[n * 8..];
        tensors.push(Tensor::new(&entry.shape, data)?);
    }
    if !body.is_empty() {
        return Err(Error::Contract(format!(
            "{} trailing bytes after parameter blocks",
            body.len()
        )));
    }
    Ok((header, tensors))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, store: &ParamStore) -> Result<()> {
    let bytes = encode_checkpoint(header, store)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Tensor>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Copies checkpoint tensors into a store built from the same architecture.
pub fn restore_into(store: &mut ParamStore, header: &CheckpointHeader, tensors: Vec<Tensor>) -> Result<()> {
    if header.params.len() != store.len() {
        return Err(Error::Contract(format!(
            "checkpoint holds {} tensors, model expects {}",
            header.params.len(),
            store.len()
        )));
    }
    for ((entry, t), p) in header.params.iter().zip(tensors).zip(store.iter_mut()) {
        if entry.name != p.name || t.shape() != p.value.shape() {
            return Err(Error::Contract(format!(
                "checkpoint entry {} {:?} does not match model entry {} {:?}",
                entry.name,
                t.shape(),
                p.name,
                p.value.shape()
            )));
        }
        p.value = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_restores_values_exactly() {
        let mut store = ParamStore::new();
        store.add("a.weight", Tensor::new(&[2, 2], vec![1.0, -0.5, f64::MIN_POSITIVE, 3.25]).unwrap(), true);
        store.add("a.running_var", Tensor::new(&[1], vec![0.1]).unwrap(), false);
        let header = CheckpointHeader::new("test", serde_json::json!({"k": 5}), &store, serde_json::Value::Null);
        let bytes = encode_checkpoint(&header, &store).unwrap();
        assert_eq!(bytes.len() - bytes.iter().position(|&b| b == b'\n').unwrap() - 1, 5 * 8);

        let (h, tensors) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h, header);
        let mut fresh = ParamStore::new();
        fresh.add("a.weight", Tensor::zeros(&[2, 2]), true);
        fresh.add("a.running_var", Tensor::zeros(&[1]), false);
        restore_into(&mut fresh, &h, tensors).unwrap();
        assert_eq!(fresh.iter().next().unwrap().1.value, store.iter().next().unwrap().1.value);
    }

    #[test]
    fn rejects_truncation_and_bad_versions() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[3]), true);
        let header = CheckpointHeader::new("test", serde_json::Value::Null, &store, serde_json::Value::Null);
        let bytes = encode_checkpoint(&header, &store).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());

        let mut bad = header.clone();
        bad.version = 99;
        let bytes = encode_checkpoint(&bad, &store).unwrap();
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
