use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledBatch};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augment {
    #[default]
    None,
    /// Zero-pad by 4, random crop back to size, random horizontal flip.
    CropFlip,
}

const PAD: usize = 4;

/// One epoch of shuffled batches; the final partial batch is kept.
pub struct BatchIter<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Augment,
    rng: ChaCha8Rng,
}

/// Seeded batch stream for one epoch.
pub fn batches(
    dataset: &Dataset,
    batch_size: usize,
    epoch_seed: u64,
    augment: Augment,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::arg("batch_size must be at least 1"));
    }
    if augment == Augment::CropFlip && dataset.sample_shape().len() != 3 {
        return Err(Error::arg(format!(
            "crop-flip needs [C, H, W] samples, dataset has {:?}",
            dataset.sample_shape()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    rng.set_stream(1);
    Ok(BatchIter {
        data: dataset,
        order,
        pos: 0,
        batch_size,
        augment,
        rng,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = LabeledBatch;

    fn next(&mut self) -> Option<LabeledBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let mut batch = self.data.gather(idx);
        if self.augment == Augment::CropFlip {
            let shape = self.data.sample_shape();
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let n = c * h * w;
            let mut out = vec![0.0f32; batch.features.len()];
            for (src, dst) in batch.features.chunks(n).zip(out.chunks_mut(n)) {
                let dy = self.rng.random_range(0..=2 * PAD);
                let dx = self.rng.random_range(0..=2 * PAD);
                let flip = self.rng.random_bool(0.5);
                for ch in 0..c {
                    for y in 0..h {
                        let sy = y as isize + dy as isize - PAD as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let xc = if flip { w - 1 - x } else { x };
                            let sx = xc as isize + dx as isize - PAD as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            dst[(ch * h + y) * w + x] =
                                src[(ch * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
            }
            batch.features = out;
        }
        Some(batch)
    }
}
