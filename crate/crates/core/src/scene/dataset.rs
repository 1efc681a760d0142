//! Binary dataset file.
//!
//! Layout (little-endian): magic `PSGD`, `u32` version, `u32` record count,
//! then per record: `u64` seed, `u32` point count, points as `f64 x, f64 y`,
//! `u32` pair count, pairs as `u32, u32`, and the 256×256×3 image as raw
//! `f32` values in row-major HWC order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::binio::Cursor;
use crate::error::{Error, Result};
use crate::perception::MarkingPoint;

use super::{Image, SceneRecord};

pub const DATASET_MAGIC: [u8; 4] = *b"PSGD";
pub const DATASET_VERSION: u32 = 1;
const IMAGE_SIZE: usize = 256;
const IMAGE_VALUES: usize = IMAGE_SIZE * IMAGE_SIZE * 3;

pub fn write_dataset(records: &[SceneRecord], path: impl AsRef<Path>) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.image.width != IMAGE_SIZE
            || r.image.height != IMAGE_SIZE
            || r.image.data.len() != IMAGE_VALUES
        {
            return Err(Error::Data(format!(
                "record {i}: dataset images must be {IMAGE_SIZE}×{IMAGE_SIZE}×3"
            )));
        }
    }
    let count = u32::try_from(records.len()).map_err(|_| Error::Data("too many records".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for r in records {
        w.write_all(&r.seed.to_le_bytes())?;
        w.write_all(&(r.points.len() as u32).to_le_bytes())?;
        for p in &r.points {
            w.write_all(&p.x.to_le_bytes())?;
            w.write_all(&p.y.to_le_bytes())?;
        }
        w.write_all(&(r.entrance_pairs.len() as u32).to_le_bytes())?;
        for &(a, b) in &r.entrance_pairs {
            w.write_all(&a.to_le_bytes())?;
            w.write_all(&b.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(IMAGE_VALUES * 4);
        for v in &r.image.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a whole dataset. Any malformation fails the call; no partial list is
/// returned.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<SceneRecord>> {
    let mut c = Cursor::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    c.fill(&mut magic, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"PSGD\""),
        ));
    }
    let version = c.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported dataset version {version}"),
        ));
    }
    let count = c.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(4096));
    for idx in 0..count {
        let seed = c.u64("seed")?;
        let n_points = c.u32("point count")? as usize;
        let mut points = Vec::with_capacity(n_points.min(1024));
        for _ in 0..n_points {
            let x = c.f64("point x")?;
            let y = c.f64("point y")?;
            points.push(MarkingPoint::new(x, y, 1.0));
        }
        let pair_offset = c.offset;
        let n_pairs = c.u32("pair count")? as usize;
        let mut pairs = Vec::with_capacity(n_pairs.min(1024));
        for _ in 0..n_pairs {
            let a = c.u32("pair index")?;
            let b = c.u32("pair index")?;
            if a == b || a as usize >= n_points || b as usize >= n_points {
                return Err(Error::format(
                    pair_offset,
                    format!("record {idx}: pair ({a}, {b}) invalid for {n_points} points"),
                ));
            }
            pairs.push((a, b));
        }
        let mut raw = vec![0u8; IMAGE_VALUES * 4];
        c.fill(&mut raw, "image")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(SceneRecord {
            image: Image {
                width: IMAGE_SIZE,
                height: IMAGE_SIZE,
                data,
            },
            points,
            entrance_pairs: pairs,
            seed,
        });
    }
    c.expect_end()?;
    Ok(records)
}
