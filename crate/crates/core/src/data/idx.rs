//! IDX container reader (big-endian header, unsigned-byte payload).

use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                bytes.len() as u64,
                format!("header needs {} bytes, file has {}", at + 4, bytes.len()),
            )
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::format(
            0,
            format!("magic 0x{magic:08x}, expected 0x{want:08x}"),
        ));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, expected: usize) -> Result<&[u8]> {
    let have = bytes.len() - header;
    if have != expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "payload expected {expected} bytes after {header}-byte header, found {have} \
                 (file length {} vs {})",
                bytes.len(),
                header + expected
            ),
        ));
    }
    Ok(&bytes[header..])
}

/// Returns `(count, rows, cols, pixels scaled to [0,1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let data = payload(bytes, 16, n * rows * cols)?;
    Ok((
        n,
        rows,
        cols,
        data.iter().map(|&b| b as f32 / 255.0).collect(),
    ))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.iter().map(|&b| b as usize).collect())
}

/// Reads an image/label file pair into a dataset with samples shaped `rows × cols`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&img)?;
    let labels = parse_idx_labels(&lab)?;
    if labels.len() != n {
        return Err(Error::format(
            4,
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(pixels, vec![rows, cols], labels, classes, Split::Train)
}
