use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::mask::{Mask, MaskLayer, MaskMethod};
use crate::error::{Error, Result};
use crate::nn::WeightSnapshot;
use crate::scalar::Scalar;

/// Fraction of prunable weights removed, in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SparsityRatio(f64);

impl SparsityRatio {
    pub fn new(s: f64) -> Result<Self> {
        if (0.0..1.0).contains(&s) {
            Ok(SparsityRatio(s))
        } else {
            Err(Error::arg(format!("sparsity must lie in [0, 1), got {s}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SparsityRatio {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        SparsityRatio::new(s)
    }
}

impl From<SparsityRatio> for f64 {
    fn from(s: SparsityRatio) -> f64 {
        s.0
    }
}

/// Ranking pool for magnitude pruning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    /// One ranking across all prunable weights.
    #[default]
    Global,
    /// Each layer pruned to the same fraction independently.
    PerLayer,
}

/// Fraction of the remaining weights removed by each IMP round.
pub const IMP_RATE: f64 = 0.2;

/// Sparsity after `k` IMP rounds: `1 - 0.8^k`, capped below 1 for huge `k`.
pub fn imp_sparsity(k: u32) -> SparsityRatio {
    let s = 1.0 - (1.0 - IMP_RATE).powi(k.min(i32::MAX as u32) as i32);
    SparsityRatio(s.min(1.0 - f64::EPSILON / 2.0))
}

/// Smallest-magnitude-first order; among equal magnitudes the larger
/// `(layer, index)` goes first, so lower positions survive.
fn prune_order<T: Scalar>(a: &(T, usize, usize), b: &(T, usize, usize)) -> Ordering {
    a.0.abs()
        .widen()
        .total_cmp(&b.0.abs().widen())
        .then_with(|| (b.1, b.2).cmp(&(a.1, a.2)))
}

/// Clears `count` keep flags, choosing candidates by [`prune_order`].
fn prune_smallest<T: Scalar>(
    mut cands: Vec<(T, usize, usize)>,
    count: usize,
    keep: &mut [Vec<bool>],
) {
    if count == 0 {
        return;
    }
    if count < cands.len() {
        cands.select_nth_unstable_by(count, prune_order);
        cands.truncate(count);
    }
    for (_, l, i) in cands {
        keep[l][i] = false;
    }
}

fn candidates<T: Scalar>(
    snapshot: &WeightSnapshot<T>,
    keep: &[Vec<bool>],
    layer: Option<usize>,
) -> Vec<(T, usize, usize)> {
    snapshot
        .prunable()
        .enumerate()
        .filter(|(l, _)| layer.is_none_or(|x| x == *l))
        .flat_map(|(l, e)| {
            e.values
                .iter()
                .enumerate()
                .filter(move |(i, _)| keep[l][*i])
                .map(move |(i, &v)| (v, l, i))
        })
        .collect()
}

fn to_mask<T: Scalar>(
    snapshot: &WeightSnapshot<T>,
    keep: Vec<Vec<bool>>,
    method: MaskMethod,
) -> Mask {
    let layers = snapshot
        .prunable()
        .zip(keep)
        .map(|(e, keep)| MaskLayer {
            name: e.name.clone(),
            shape: e.shape.clone(),
            keep,
        })
        .collect();
    Mask::from_layers(layers, method, &snapshot.meta.arch_hash)
}

fn floor_count(s: f64, n: usize) -> usize {
    ((s * n as f64).floor() as usize).min(n)
}

/// One-shot magnitude pruning to sparsity `s`.
pub fn omp<T: Scalar>(
    snapshot: &WeightSnapshot<T>,
    s: SparsityRatio,
    scope: PruneScope,
) -> Result<Mask> {
    let dense = Mask::dense(snapshot);
    if dense.total() == 0 {
        return Err(Error::arg("snapshot has no prunable weights"));
    }
    let mut keep: Vec<Vec<bool>> = dense.layers.into_iter().map(|l| l.keep).collect();
    match scope {
        PruneScope::Global => {
            let cands = candidates(snapshot, &keep, None);
            let count = floor_count(s.0, cands.len());
            prune_smallest(cands, count, &mut keep);
        }
        PruneScope::PerLayer => {
            for l in 0..keep.len() {
                let cands = candidates(snapshot, &keep, Some(l));
                let count = floor_count(s.0, cands.len());
                prune_smallest(cands, count, &mut keep);
            }
        }
    }
    Ok(to_mask(snapshot, keep, MaskMethod::Omp))
}

/// One IMP round: additionally prune `floor(0.2 · remaining)` of the kept weights.
pub fn imp_next<T: Scalar>(
    current: &Mask,
    trained: &WeightSnapshot<T>,
    scope: PruneScope,
) -> Result<Mask> {
    current.check_aligned(trained)?;
    if current.kept() == 0 {
        return Err(Error::arg(
            "current mask keeps no weights; nothing left to prune",
        ));
    }
    if !current.satisfied_by(trained) {
        return Err(Error::arg(
            "trained snapshot has nonzero values at masked positions",
        ));
    }
    let round = match current.meta.method {
        MaskMethod::Imp(k) => k + 1,
        MaskMethod::Omp => 1,
    };
    let mut keep: Vec<Vec<bool>> = current.layers.iter().map(|l| l.keep.clone()).collect();
    match scope {
        PruneScope::Global => {
            let cands = candidates(trained, &keep, None);
            let count = cands.len() / 5;
            prune_smallest(cands, count, &mut keep);
        }
        PruneScope::PerLayer => {
            for l in 0..keep.len() {
                let cands = candidates(trained, &keep, Some(l));
                let count = cands.len() / 5;
                prune_smallest(cands, count, &mut keep);
            }
        }
    }
    Ok(to_mask(trained, keep, MaskMethod::Imp(round)))
}
