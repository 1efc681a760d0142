//! Checkpoint file.
//!
//! Layout (little-endian): magic `PSCK`, `u32` parameter version, `u32`
//! length + UTF-8 JSON model config, `u32` tensor count, then per tensor in
//! sorted path order: `u32` length + UTF-8 path, `u32` rank, `u64` dims,
//! `f64` values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::binio::Cursor;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::{ModelParams, PARAMS_VERSION};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PSCK";

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&params.version.to_le_bytes())?;
    let config = serde_json::to_vec(&params.config).map_err(|e| Error::Data(e.to_string()))?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let mut c = Cursor::new(BufReader::new(File::open(path)?));
    let magic = c.bytes(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"PSCK\""),
        ));
    }
    let version = c.u32("version")?;
    if version != PARAMS_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let config_at = c.offset;
    let len = c.u32("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(&c.bytes(len, "config")?)
        .map_err(|e| Error::format(config_at, format!("bad config snapshot: {e}")))?;
    let count = c.u32("tensor count")? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let at = c.offset;
        let len = c.u32("name length")? as usize;
        let name = String::from_utf8(c.bytes(len, "name")?)
            .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?;
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.bytes(n * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(at, e.to_string()))?;
        tensors.insert(name, t);
    }
    c.expect_end()?;
    ModelParams::from_parts(version, config, tensors)
}
