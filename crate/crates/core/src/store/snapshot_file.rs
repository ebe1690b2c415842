//! `LTHS` weight snapshot files.
//!
//! ```text
//! "LTHS" | version u16 | layer count u32
//! per layer: name len u16 | name | rank u8 | dims u32 × rank | values f32 × ∏dims
//! metadata len u32 | metadata JSON {epoch, seed, arch_hash}
//! ```
//! All integers and floats little-endian.

use std::path::Path;

use super::codec::{put_header, put_layer_head, put_metadata, Reader};
use crate::error::{Error, Result};
use crate::nn::{LayerEntry, SnapshotMeta, WeightSnapshot};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"LTHS";

pub fn encode_snapshot(s: &WeightSnapshot<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 4 * s.count(crate::nn::ParamScope::All));
    put_header(&mut out, SNAPSHOT_MAGIC, s.entries.len());
    for e in &s.entries {
        put_layer_head(&mut out, &e.name, &e.shape)?;
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_metadata(&mut out, &s.meta);
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<WeightSnapshot<f32>> {
    let mut r = Reader::new(bytes);
    let layers = r.header(SNAPSHOT_MAGIC)? as usize;
    let mut entries = Vec::new();
    for _ in 0..layers {
        let (name, shape, count) = r.layer_head()?;
        let need = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(r.pos() as u64, "value count overflows"))?;
        let raw = r.take(need, "layer values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(LayerEntry {
            name,
            shape,
            values,
        });
    }
    let meta: SnapshotMeta = r.metadata()?;
    WeightSnapshot::new(entries, meta)
}

pub fn write_snapshot(path: &Path, s: &WeightSnapshot<f32>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_snapshot(s)?).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<WeightSnapshot<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

/// Reads a snapshot and insists it was produced for `arch_hash`.
pub fn read_snapshot_for(path: &Path, arch_hash: &str) -> Result<WeightSnapshot<f32>> {
    let s = read_snapshot(path)?;
    if s.meta.arch_hash != arch_hash {
        return Err(Error::config(format!(
            "{} was written for architecture {}, expected {arch_hash}",
            path.display(),
            s.meta.arch_hash
        )));
    }
    Ok(s)
}
