//! `LTHM` mask files.
//!
//! Same header and per-layer head as snapshots; each layer body is the keep
//! flags bit-packed least-significant-bit first and zero-padded to a byte. The
//! metadata JSON is `{sparsity, method, arch_hash}`.

use std::path::Path;

use super::codec::{put_header, put_layer_head, put_metadata, Reader};
use crate::error::{Error, Result};
use crate::prune::{Mask, MaskLayer, MaskMeta};

pub const MASK_MAGIC: &[u8; 4] = b"LTHM";

pub fn encode_mask(m: &Mask) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    put_header(&mut out, MASK_MAGIC, m.layers.len());
    for l in &m.layers {
        put_layer_head(&mut out, &l.name, &l.shape)?;
        for chunk in l.keep.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |b, (i, &k)| b | ((k as u8) << i));
            out.push(byte);
        }
    }
    put_metadata(&mut out, &m.meta);
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let mut r = Reader::new(bytes);
    let layers = r.header(MASK_MAGIC)? as usize;
    let mut out = Vec::new();
    for _ in 0..layers {
        let (name, shape, count) = r.layer_head()?;
        let at = r.pos();
        let packed = r.take(count.div_ceil(8), "mask bits")?;
        let keep: Vec<bool> = (0..count)
            .map(|i| packed[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        if count % 8 != 0 && packed[count / 8] >> (count % 8) != 0 {
            return Err(Error::format(
                (at + count / 8) as u64,
                "nonzero padding bits after the last flag",
            ));
        }
        out.push(MaskLayer { name, shape, keep });
    }
    let at = r.pos();
    let meta: MaskMeta = r.metadata()?;
    let mask = Mask { layers: out, meta };
    if (mask.sparsity() - mask.meta.sparsity).abs() > 1e-12 {
        return Err(Error::format(
            at as u64,
            format!(
                "recorded sparsity {} disagrees with flags ({} of {} pruned)",
                mask.meta.sparsity,
                mask.pruned(),
                mask.total()
            ),
        ));
    }
    Ok(mask)
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_mask(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes)
}
