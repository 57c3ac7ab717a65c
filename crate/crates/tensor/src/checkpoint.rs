//! Parameter checkpoints: a single-line JSON header followed by the raw
//! little-endian f64 payload of every parameter in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::nn::{Init, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub params: Vec<ParamEntry>,
    pub seed: u64,
    pub step: u64,
}

pub fn to_bytes(store: &ParamStore, seed: u64, step: u64) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        params: store
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                init: p.init.clone(),
            })
            .collect(),
        seed,
        step,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for p in store.params() {
        for v in p.tensor.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(path: &Path, store: &ParamStore, seed: u64, step: u64) -> Result<()> {
    let bytes = to_bytes(store, seed, step)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    Ok(serde_json::from_str(line.trim_end())?)
}

/// Loads values into an already-built store. Names and shapes must match
/// exactly and in order.
pub fn load(path: &Path, store: &ParamStore) -> Result<CheckpointHeader> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.params.len() != store.params().len() {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            header.params.len(),
            store.params().len()
        )));
    }
    for (entry, p) in header.params.iter().zip(store.params()) {
        if entry.name != p.name || entry.shape != p.tensor.shape() {
            return Err(TensorError::Checkpoint(format!(
                "parameter `{}` {:?} does not match model `{}` {:?}",
                entry.name,
                entry.shape,
                p.name,
                p.tensor.shape()
            )));
        }
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected: usize = store.num_values() * 8;
    if payload.len() != expected {
        return Err(TensorError::Checkpoint(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut chunks = payload.chunks_exact(8);
    for p in store.params() {
        let mut data = p.tensor.data_mut();
        for v in data.iter_mut() {
            let bytes = chunks.next().expect("payload length checked");
            *v = f64::from_le_bytes(bytes.try_into().expect("chunk of 8"));
        }
    }
    Ok(header)
}
