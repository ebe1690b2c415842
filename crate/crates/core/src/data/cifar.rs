//! CIFAR binary record reader.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

const PIXELS: usize = 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CifarLayout {
    /// `<label><3072 pixels>` records.
    TenClass,
    /// `<coarse label><fine label><3072 pixels>` records; the fine label is kept.
    HundredClass,
}

impl CifarLayout {
    pub fn record_len(self) -> usize {
        match self {
            CifarLayout::TenClass => 1 + PIXELS,
            CifarLayout::HundredClass => 2 + PIXELS,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarLayout::TenClass => 10,
            CifarLayout::HundredClass => 100,
        }
    }
}

pub fn parse_cifar_binary(bytes: &[u8], layout: CifarLayout, split: Split) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::format(0, "empty CIFAR file: no records"));
    }
    let rec = layout.record_len();
    if !bytes.len().is_multiple_of(rec) {
        return Err(Error::format(
            (bytes.len() / rec * rec) as u64,
            format!(
                "file length {} is not a multiple of the {rec}-byte record",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / rec;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * PIXELS);
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let label = r[rec - PIXELS - 1] as usize;
        if label >= layout.num_classes() {
            return Err(Error::format(
                (i * rec + rec - PIXELS - 1) as u64,
                format!("label {label} out of range"),
            ));
        }
        labels.push(label);
        pixels.extend(r[rec - PIXELS..].iter().map(|&b| b as f32 / 255.0));
    }
    Dataset::new(pixels, vec![3, 32, 32], labels, layout.num_classes(), split)
}

pub fn load_cifar_binary(path: &Path, layout: CifarLayout, split: Split) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_binary(&bytes, layout, split)
}
