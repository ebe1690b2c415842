#![allow(dead_code)]

use lth_core::data::SyntheticKind;
use lth_core::nn::{ArchSpec, LayerEntry, SnapshotMeta, WeightSnapshot};
use lth_core::optim::{Preset, Schedule, TrainRecipe};
use lth_core::protocol::{DataSpec, Experiment, Seeds};
use lth_core::prune::{Mask, MaskLayer, MaskMethod, PruneScope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Snapshot of rank-2 "weight" layers (prunable) each followed by a bias.
pub fn snapshot_from(layers: Vec<Vec<f32>>) -> WeightSnapshot<f32> {
    let mut entries = Vec::new();
    for (i, v) in layers.into_iter().enumerate() {
        let n = v.len();
        entries.push(LayerEntry {
            name: format!("l{i}.weight"),
            shape: vec![1, n],
            values: v,
        });
        entries.push(LayerEntry {
            name: format!("l{i}.bias"),
            shape: vec![1],
            values: vec![0.25],
        });
    }
    WeightSnapshot::new(
        entries,
        SnapshotMeta {
            epoch: 0,
            seed: 0,
            arch_hash: "test".into(),
        },
    )
    .unwrap()
}

/// Random layer sizes summing to `total`, values drawn from a small alphabet when
/// `dupes` so that magnitudes collide often.
pub fn random_layers(r: &mut ChaCha8Rng, total: usize, dupes: bool) -> Vec<Vec<f32>> {
    let n_layers = r.random_range(1..=4).min(total);
    let mut cuts: Vec<usize> = (0..n_layers - 1)
        .map(|_| r.random_range(1..total.max(2)))
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut sizes = Vec::new();
    let mut prev = 0;
    for c in cuts.into_iter().chain([total]) {
        if c > prev {
            sizes.push(c - prev);
            prev = c;
        }
    }
    sizes
        .into_iter()
        .map(|n| {
            (0..n)
                .map(|_| {
                    if dupes {
                        r.random_range(-4i32..=4) as f32 * 0.5
                    } else {
                        r.random_range(-1.0f32..1.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Brute-force OMP: sort every candidate by (|v| ascending, then larger
/// (layer, index) first) and drop the first floor(s·N).
pub fn omp_oracle(layers: &[Vec<f32>], s: f64, scope: PruneScope) -> Vec<Vec<bool>> {
    let mut keep: Vec<Vec<bool>> = layers.iter().map(|l| vec![true; l.len()]).collect();
    let drop = |cands: &mut Vec<(f32, usize, usize)>, keep: &mut Vec<Vec<bool>>| {
        cands.sort_by(|a, b| {
            a.0.abs()
                .partial_cmp(&b.0.abs())
                .unwrap()
                .then((b.1, b.2).cmp(&(a.1, a.2)))
        });
        let count = (s * cands.len() as f64).floor() as usize;
        for &(_, l, i) in &cands[..count] {
            keep[l][i] = false;
        }
    };
    match scope {
        PruneScope::Global => {
            let mut c: Vec<_> = layers
                .iter()
                .enumerate()
                .flat_map(|(l, v)| v.iter().enumerate().map(move |(i, &x)| (x, l, i)))
                .collect();
            drop(&mut c, &mut keep);
        }
        PruneScope::PerLayer => {
            for (l, v) in layers.iter().enumerate() {
                let mut c: Vec<_> = v.iter().enumerate().map(|(i, &x)| (x, l, i)).collect();
                drop(&mut c, &mut keep);
            }
        }
    }
    keep
}

pub fn random_mask(r: &mut ChaCha8Rng, layers: &[Vec<f32>]) -> Mask {
    let ls = layers
        .iter()
        .enumerate()
        .map(|(i, v)| MaskLayer {
            name: format!("l{i}.weight"),
            shape: vec![1, v.len()],
            keep: (0..v.len()).map(|_| r.random_bool(0.6)).collect(),
        })
        .collect();
    Mask::from_layers(ls, MaskMethod::Imp(r.random_range(0..12)), "test")
}

/// Constant-rate recipe with rewind epoch 1, for short desk runs.
pub fn flat_recipe(epochs: u32, batch: usize) -> TrainRecipe {
    TrainRecipe {
        total_epochs: epochs,
        schedule: Schedule::Step {
            decay_epochs: vec![],
            factor: 10.0,
        },
        batch_size: batch,
        rewind_epoch: 1,
        ..Preset::CifarStyle.recipe()
    }
}

pub fn blobs_experiment(widths: &[usize], epochs: u32) -> Experiment {
    Experiment::new(
        ArchSpec::fc(2, widths, 3),
        DataSpec::Synthetic {
            kind: SyntheticKind::Blobs,
            n_train: 192,
            n_test: 96,
            num_classes: 3,
            noise: 0.3,
            seed: 5,
        },
        flat_recipe(epochs, 32),
        Seeds {
            init: 1,
            reinit: 2,
            data: 3,
        },
    )
}

pub fn spirals(n: usize) -> DataSpec {
    DataSpec::Synthetic {
        kind: SyntheticKind::Spirals,
        n_train: n,
        n_test: n,
        num_classes: 2,
        noise: 0.1,
        seed: 7,
    }
}

/// Fresh random values with the prunable layer sizes of `snap`.
pub fn random_layers_like(r: &mut ChaCha8Rng, snap: &WeightSnapshot<f32>) -> Vec<Vec<f32>> {
    snap.prunable()
        .map(|e| {
            (0..e.values.len())
                .map(|_| r.random_range(-1.0f32..1.0))
                .collect()
        })
        .collect()
}
