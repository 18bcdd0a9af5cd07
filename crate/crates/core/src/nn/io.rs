//! Binary weight files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `SSBMLP\0\x01` |
//! | 8     | `u64` length `h` of the JSON header |
//! | h     | UTF-8 JSON `{ "spec", "best_epoch", "history" }` |
//! | 8     | `u64` parameter count `p` |
//! | 8·p   | `f64` parameters in layer order |
//!
//! Layer order is the trunk from input upward, then each head in declaration order. Each layer
//! stores its `fan_in × fan_out` weight matrix row-major followed by its `fan_out` biases.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::train::{History, TrainedModel};
use super::MlpSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SSBMLP\0\x01";

#[derive(Serialize, Deserialize)]
struct Header {
    spec: MlpSpec,
    best_epoch: usize,
    history: History,
}

pub fn write_model<W: Write>(model: &TrainedModel, mut out: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&Header {
        spec: model.spec().clone(),
        best_epoch: model.best_epoch,
        history: model.history.clone(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let params = model.network.params();
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_model<R: Read>(mut input: R) -> Result<TrainedModel> {
    let bad = |e: std::io::Error| Error::Schema(format!("truncated weight file: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(bad)?;
    if &magic != MAGIC {
        return Err(Error::Schema("not a weight file (bad magic)".into()));
    }
    let header_len = read_u64(&mut input).map_err(bad)? as usize;
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header).map_err(bad)?;
    let header: Header = serde_json::from_slice(&header)?;
    let count = read_u64(&mut input).map_err(bad)? as usize;
    let mut params = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut buf).map_err(bad)?;
        params.push(f64::from_le_bytes(buf));
    }
    let mut network = Network::zeros(header.spec)?;
    network.set_params(params)?;
    Ok(TrainedModel {
        network,
        history: header.history,
        best_epoch: header.best_epoch,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(bytes.as_slice())
}
