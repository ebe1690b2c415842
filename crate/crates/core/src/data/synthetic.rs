use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataSplits, Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Isotropic Gaussian clusters around points evenly spaced on the unit circle.
    Blobs,
    /// Interleaved spiral arms; `noise` is scaled into angular jitter.
    Spirals,
}

/// Deterministic 2-D classification data.
///
/// Labels are assigned round-robin so classes are balanced within one sample.
/// Train and test come from independent ChaCha streams of the same seed, so the
/// two splits never share a draw.
pub fn load_synthetic(
    kind: SyntheticKind,
    n_train: usize,
    n_test: usize,
    num_classes: usize,
    noise: f64,
    seed: u64,
) -> Result<DataSplits> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::arg("synthetic datasets need n_train, n_test > 0"));
    }
    if num_classes == 0 {
        return Err(Error::arg("num_classes must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::arg(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    let phase = ChaCha8Rng::seed_from_u64(seed).random::<f64>() * 2.0 * PI;
    let make = |n: usize, stream: u64, split: Split| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream + 1);
        let mut feats = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % num_classes;
            let base = phase + 2.0 * PI * k as f64 / num_classes as f64;
            let (x, y) = match kind {
                SyntheticKind::Blobs => {
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    (base.cos() + noise * nx, base.sin() + noise * ny)
                }
                SyntheticKind::Spirals => {
                    let t: f64 = rng.random();
                    let jitter: f64 = rng.sample(StandardNormal);
                    let theta = base + 4.0 * t + 2.0 * noise * jitter;
                    (t * theta.cos(), t * theta.sin())
                }
            };
            feats.push(x as f32);
            feats.push(y as f32);
            labels.push(k);
        }
        Dataset::new(feats, vec![2], labels, num_classes, split)
    };
    Ok(DataSplits {
        train: make(n_train, 0, Split::Train)?,
        test: make(n_test, 1, Split::Test)?,
    })
}
