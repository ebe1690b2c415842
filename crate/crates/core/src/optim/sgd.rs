use serde::{Deserialize, Serialize};

use super::schedule::{lr_at, TrainRecipe};
use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Model, WeightSnapshot};
use crate::prune::Mask;
use crate::scalar::Scalar;

/// Momentum buffers mirroring the weights, plus the next epoch to run.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub velocity: Vec<Vec<T>>,
    pub epoch: u32,
}

impl<T: Scalar> OptimState<T> {
    /// Zero velocities, starting at `epoch`.
    pub fn new(weights: &WeightSnapshot<T>, epoch: u32) -> Self {
        OptimState {
            velocity: weights
                .entries
                .iter()
                .map(|e| vec![T::zero(); e.len()])
                .collect(),
            epoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

/// Per-entry keep flags (`None` for unmasked tensors such as biases).
fn keep_flags<'a, T: Scalar>(
    weights: &WeightSnapshot<T>,
    mask: Option<&'a Mask>,
) -> Result<Vec<Option<&'a [bool]>>> {
    let Some(mask) = mask else {
        return Ok(vec![None; weights.entries.len()]);
    };
    mask.check_aligned(weights)?;
    let mut layers = mask.layers.iter();
    Ok(weights
        .entries
        .iter()
        .map(|e| {
            if e.is_prunable() {
                layers.next().map(|l| l.keep.as_slice())
            } else {
                None
            }
        })
        .collect())
}

/// One SGD update with coupled ℓ2: `v ← μv + (g + λw)`, `w ← w − lr·v`, then
/// masked positions of both `w` and `v` are set to exactly zero.
pub fn sgd_step<T: Scalar>(
    weights: &mut WeightSnapshot<T>,
    grads: &[Vec<T>],
    keep: &[Option<&[bool]>],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: &mut [Vec<T>],
) {
    for (((e, g), v), k) in weights
        .entries
        .iter_mut()
        .zip(grads)
        .zip(velocity.iter_mut())
        .zip(keep)
    {
        for j in 0..e.values.len() {
            let w = e.values[j].widen();
            let vel = momentum * v[j].widen() + (g[j].widen() + weight_decay * w);
            v[j] = T::narrow(vel);
            e.values[j] = T::narrow(w - lr * v[j].widen());
        }
        if let Some(k) = k {
            for ((w, v), &keep) in e.values.iter_mut().zip(v.iter_mut()).zip(k.iter()) {
                if !keep {
                    *w = T::zero();
                    *v = T::zero();
                }
            }
        }
    }
}

/// Runs epoch `state.epoch` of `recipe` over `dataset`.
///
/// The learning rate is fixed for the whole epoch. Metrics are accumulated from the
/// training batches themselves.
pub fn sgd_epoch<T: Scalar>(
    model: &Model,
    mut weights: WeightSnapshot<T>,
    mask: Option<&Mask>,
    dataset: &Dataset,
    recipe: &TrainRecipe,
    mut state: OptimState<T>,
    epoch_seed: u64,
) -> Result<(WeightSnapshot<T>, OptimState<T>, EpochMetrics)> {
    model.check_snapshot(&weights)?;
    let keep = keep_flags(&weights, mask)?;
    let epoch = state.epoch;
    let lr = lr_at(recipe, epoch)?;
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut seen = 0usize;
    for (b, batch) in batches(dataset, recipe.batch_size, epoch_seed, recipe.augment)?.enumerate() {
        let out = model
            .loss_and_grad(&weights, &batch)
            .map_err(|e| e.at(&format!("epoch {epoch} batch {b}")))?;
        if !out.loss.is_finite() {
            return Err(Error::Numeric {
                location: format!("epoch {epoch} batch {b}"),
                detail: format!("loss {}", out.loss),
            });
        }
        loss_sum += out.loss * batch.len() as f64;
        correct += out.correct;
        seen += batch.len();
        sgd_step(
            &mut weights,
            &out.grads,
            &keep,
            lr,
            recipe.momentum,
            recipe.weight_decay,
            &mut state.velocity,
        );
    }
    state.epoch += 1;
    weights.meta.epoch = state.epoch;
    let metrics = EpochMetrics {
        epoch,
        lr,
        train_loss: loss_sum / seen.max(1) as f64,
        train_accuracy: correct as f64 / seen.max(1) as f64,
    };
    Ok((weights, state, metrics))
}
