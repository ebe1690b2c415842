use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::snapshot::{LayerEntry, SnapshotMeta, WeightSnapshot};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    KaimingUniform,
    KaimingNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl InitSpec {
    pub fn uniform(seed: u64) -> Self {
        InitSpec {
            scheme: InitScheme::KaimingUniform,
            seed,
        }
    }
}

/// Sample θ₀ for `model`.
///
/// Weights use Kaiming scaling on fan-in (uniform bound `sqrt(6/fan_in)` or normal
/// std `sqrt(2/fan_in)`); biases are uniform in `±1/sqrt(fan_in)`. Parameters are
/// drawn in layer order from a single ChaCha8 stream.
pub fn init_weights<T: Scalar>(model: &Model, init: InitSpec) -> WeightSnapshot<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let mut entries = Vec::with_capacity(model.params().len());
    for p in model.params() {
        let n: usize = p.shape.iter().product();
        let fan_in = p.fan_in as f64;
        let values: Vec<T> = if p.prunable {
            match init.scheme {
                InitScheme::KaimingUniform => {
                    let bound = (6.0 / fan_in).sqrt();
                    let d = Uniform::new(-bound, bound).expect("finite bound");
                    (0..n).map(|_| T::narrow(d.sample(&mut rng))).collect()
                }
                InitScheme::KaimingNormal => {
                    let d = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
                    (0..n).map(|_| T::narrow(d.sample(&mut rng))).collect()
                }
            }
        } else {
            let bound = 1.0 / fan_in.sqrt();
            let d = Uniform::new(-bound, bound).expect("finite bound");
            (0..n).map(|_| T::narrow(d.sample(&mut rng))).collect()
        };
        entries.push(LayerEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            values,
        });
    }
    WeightSnapshot {
        entries,
        meta: SnapshotMeta {
            epoch: 0,
            seed: init.seed,
            arch_hash: model.arch_hash().to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ArchSpec;

    #[test]
    fn same_seed_is_bit_identical() {
        let m = Model::build(&ArchSpec::fc(20, &[16], 4)).unwrap();
        let a = init_weights::<f32>(&m, InitSpec::uniform(7));
        let b = init_weights::<f32>(&m, InitSpec::uniform(7));
        assert!(a.bit_identical(&b));
        assert_eq!(a.meta.epoch, 0);
        assert_eq!(a.meta.seed, 7);
    }

    #[test]
    fn distinct_seeds_differ_almost_everywhere() {
        let m = Model::build(&ArchSpec::fc(784, &[256, 256], 10)).unwrap();
        let a = init_weights::<f32>(&m, InitSpec::uniform(1)).flatten();
        let b = init_weights::<f32>(&m, InitSpec::uniform(2)).flatten();
        let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(
            differ as f64 / a.len() as f64 >= 0.99,
            "{differ}/{}",
            a.len()
        );
    }

    #[test]
    fn kaiming_uniform_bound() {
        let m = Model::build(&ArchSpec::fc(100, &[], 50)).unwrap();
        let s = init_weights::<f32>(&m, InitSpec::uniform(3));
        let bound = (6.0f64 / 100.0).sqrt() as f32;
        let w = &s.entries[0];
        assert!(w.is_prunable());
        assert!(w.values.iter().all(|v| v.abs() <= bound));
        // the sampler actually covers the range
        let max = w.values.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(max > 0.9 * bound);
    }

    #[test]
    fn kaiming_normal_std() {
        let m = Model::build(&ArchSpec::fc(200, &[], 100)).unwrap();
        let s = init_weights::<f64>(
            &m,
            InitSpec {
                scheme: InitScheme::KaimingNormal,
                seed: 11,
            },
        );
        let w = &s.entries[0].values;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 200.0).abs() < 0.05 * 2.0 / 200.0, "{var}");
    }
}
