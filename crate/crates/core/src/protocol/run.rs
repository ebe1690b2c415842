use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{imp_rounds_for, Experiment, RunConfig};
use super::kind::{InitKind, Method};
use crate::data::{DataSplits, Dataset, LabeledBatch, Split};
use crate::error::{Error, Result};
use crate::nn::{
    build_small_dense, count_params, evaluate, init_weights, InitSpec, Model, ParamScope,
    WeightSnapshot,
};
use crate::optim::{sgd_epoch, OptimState, TrainRecipe};
use crate::prune::{apply_mask, imp_next, omp, Mask, SparsityRatio};
use crate::scalar::Scalar;
use crate::store::{EpochTag, ResultRecord};

/// Shuffle seed for one epoch, derived from the run's data seed.
pub fn epoch_seed(data_seed: u64, epoch: u32) -> u64 {
    let mut z = data_seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss and accuracy (percent) over a whole dataset, evaluated in chunks.
pub fn evaluate_dataset<T: Scalar>(
    model: &Model,
    weights: &WeightSnapshot<T>,
    data: &Dataset,
    chunk: usize,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut acc = 0.0;
    for b in data.chunks(chunk) {
        let (l, a) = evaluate(model, weights, &b)?;
        loss += l * b.len() as f64;
        acc += a * b.len() as f64;
    }
    let n = data.len() as f64;
    Ok((loss / n, 100.0 * acc / n))
}

/// Loss of `weights` on a batch; shorthand for landscape evaluation.
pub fn batch_loss<T: Scalar>(
    model: &Model,
    weights: &WeightSnapshot<T>,
    batch: &LabeledBatch,
) -> Result<f64> {
    Ok(evaluate(model, weights, batch)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    /// Percent.
    pub train_accuracy: f64,
    pub test_loss: f64,
    /// Percent.
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    /// Training produced a non-finite loss.
    Diverged {
        detail: String,
    },
    /// The run could not start, e.g. a prerequisite was missing.
    Failed {
        detail: String,
    },
}

impl RunStatus {
    pub fn detail(&self) -> Option<&str> {
        match self {
            RunStatus::Completed => None,
            RunStatus::Diverged { detail } | RunStatus::Failed { detail } => Some(detail),
        }
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    /// Fraction of prunable weights actually zero at the start of training.
    pub achieved_sparsity: f64,
    pub start_epoch: u32,
    pub history: Vec<EpochRecord>,
    pub status: RunStatus,
    /// Snapshot files written for this run.
    #[serde(default)]
    pub checkpoints: Vec<std::path::PathBuf>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Final test (loss, accuracy) of a completed run.
    pub fn final_test(&self) -> Option<(f64, f64)> {
        if !self.completed() {
            return None;
        }
        self.history.last().map(|e| (e.test_loss, e.test_accuracy))
    }

    /// Results-log rows: train and test per epoch, plus the final test row.
    pub fn results(&self) -> Vec<ResultRecord> {
        let base = |epoch, split, accuracy, loss| ResultRecord {
            run_id: self.run_id.clone(),
            protocol: self.config.kind,
            pretrain_lr: self.config.pretrain_lr,
            subnet_lr: self.config.subnet_lr,
            sparsity: self.config.sparsity,
            seed: self.seed,
            replicate: self.config.replicate,
            epoch,
            split,
            accuracy,
            loss,
            config_hash: self.config_hash.clone(),
        };
        let mut out = Vec::with_capacity(2 * self.history.len() + 1);
        for e in &self.history {
            out.push(base(
                EpochTag::At(e.epoch),
                Split::Train,
                e.train_accuracy,
                e.train_loss,
            ));
            out.push(base(
                EpochTag::At(e.epoch),
                Split::Test,
                e.test_accuracy,
                e.test_loss,
            ));
        }
        if let Some((loss, acc)) = self.final_test() {
            out.push(base(EpochTag::Final, Split::Test, acc, loss));
        }
        out
    }
}

/// Result of [`train`]: final weights, history, and any requested snapshots.
pub struct TrainOutcome<T> {
    pub weights: WeightSnapshot<T>,
    pub history: Vec<EpochRecord>,
    /// Snapshots keyed by the number of epochs completed.
    pub kept: BTreeMap<u32, WeightSnapshot<T>>,
    pub status: RunStatus,
}

/// Trains from `start_epoch` to the end of `recipe`, evaluating on the test split
/// after every epoch. A non-finite loss stops training and is reported in the
/// status rather than as an error.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Scalar>(
    model: &Model,
    weights: WeightSnapshot<T>,
    mask: Option<&Mask>,
    data: &DataSplits,
    recipe: &TrainRecipe,
    start_epoch: u32,
    data_seed: u64,
    keep: &dyn Fn(u32) -> bool,
    eval_batch: usize,
) -> Result<TrainOutcome<T>> {
    if start_epoch >= recipe.total_epochs {
        return Err(Error::arg(format!(
            "start epoch {start_epoch} leaves nothing of a {}-epoch recipe",
            recipe.total_epochs
        )));
    }
    let mut weights = weights.with_epoch(start_epoch);
    let mut state = OptimState::new(&weights, start_epoch);
    let mut kept = BTreeMap::new();
    if keep(start_epoch) {
        kept.insert(start_epoch, weights.clone());
    }
    let mut history = Vec::new();
    for epoch in start_epoch..recipe.total_epochs {
        let before = weights.clone();
        let step = sgd_epoch(
            model,
            weights,
            mask,
            &data.train,
            recipe,
            state,
            epoch_seed(data_seed, epoch),
        );
        let (w, s, m) = match step {
            Ok(x) => x,
            Err(e @ Error::Numeric { .. }) => {
                return Ok(TrainOutcome {
                    weights: before,
                    history,
                    kept,
                    status: RunStatus::Diverged {
                        detail: e.to_string(),
                    },
                })
            }
            Err(e) => return Err(e),
        };
        weights = w;
        state = s;
        let (test_loss, test_accuracy) = evaluate_dataset(model, &weights, &data.test, eval_batch)?;
        history.push(EpochRecord {
            epoch,
            lr: m.lr,
            train_loss: m.train_loss,
            train_accuracy: 100.0 * m.train_accuracy,
            test_loss,
            test_accuracy,
        });
        if !test_loss.is_finite() {
            return Ok(TrainOutcome {
                weights,
                history,
                kept,
                status: RunStatus::Diverged {
                    detail: format!("test loss {test_loss} after epoch {epoch}"),
                },
            });
        }
        if keep(epoch + 1) {
            kept.insert(epoch + 1, weights.clone());
        }
    }
    Ok(TrainOutcome {
        weights,
        history,
        kept,
        status: RunStatus::Completed,
    })
}

/// Pretraining output: θ₀, θ_t, θ_T and the optional checkpoint trajectory.
pub struct PretrainArtifacts<T> {
    pub theta_0: WeightSnapshot<T>,
    pub theta_rewind: Option<WeightSnapshot<T>>,
    pub theta_final: WeightSnapshot<T>,
    /// Checkpoints in epoch order, including epoch 0 and the final epoch.
    pub trajectory: Vec<WeightSnapshot<T>>,
    pub record: RunRecord,
}

/// Trains the dense network from θ₀ at `lr`.
pub fn run_pretrain<T: Scalar>(
    exp: &Experiment,
    model: &Model,
    data: &DataSplits,
    lr: f64,
) -> Result<PretrainArtifacts<T>> {
    let cfg = RunConfig::pretrain(lr);
    let recipe = exp.recipe_at(lr);
    let theta_0 = init_weights::<T>(
        model,
        InitSpec {
            scheme: exp.init,
            seed: exp.seeds.init,
        },
    );
    let t = recipe.rewind_epoch;
    let total = recipe.total_epochs;
    let stride = exp.checkpoint_stride;
    let keep = |e: u32| e == t || e == 0 || (stride > 0 && (e.is_multiple_of(stride) || e == total));
    let out = train(
        model,
        theta_0.clone(),
        None,
        data,
        &recipe,
        0,
        exp.seeds.data,
        &keep,
        exp.eval_batch,
    )?;
    let mut kept = out.kept;
    let theta_rewind = kept.get(&t).cloned();
    let trajectory = if stride > 0 {
        kept.retain(|e, _| e % stride == 0 || *e == total);
        kept.into_values().collect()
    } else {
        Vec::new()
    };
    Ok(PretrainArtifacts {
        theta_0,
        theta_rewind,
        theta_final: out.weights,
        trajectory,
        record: RunRecord {
            run_id: cfg.run_id(exp),
            config_hash: cfg.config_hash(exp),
            config: cfg,
            seed: exp.seeds.data,
            achieved_sparsity: 0.0,
            start_epoch: 0,
            history: out.history,
            status: out.status,
            checkpoints: Vec::new(),
        },
    })
}

/// IMP masks `m_0 … m_k` for one pretraining run.
pub struct ImpChain {
    /// `masks[j]` is the mask after `j` rounds; `masks[0]` is dense.
    pub masks: Vec<Mask>,
    /// Training epochs spent, counting the pretraining run as the first round.
    pub epochs_trained: u64,
    /// Why the chain stopped early, if it did; the masks before that point are kept.
    pub halted: Option<String>,
}

/// Runs `rounds` rounds of train, prune 20% of the survivors, rewind to θ₀.
///
/// Round 1 prunes the pretrained θ_T; round `j > 1` retrains `θ₀ ⊙ m_{j−1}` for the
/// full recipe with the pretraining data seed.
pub fn run_imp_chain<T: Scalar>(
    exp: &Experiment,
    model: &Model,
    data: &DataSplits,
    pre: &PretrainArtifacts<T>,
    rounds: u32,
) -> Result<ImpChain> {
    require_completed(&pre.record)?;
    let recipe = exp.recipe_at(pre.record.config.pretrain_lr);
    let mut masks = vec![Mask::dense(&pre.theta_0)];
    let mut epochs = 0u64;
    for j in 1..=rounds {
        let prev = masks.last().expect("dense mask");
        let trained = if j == 1 {
            epochs += recipe.total_epochs as u64;
            pre.theta_final.clone()
        } else {
            let start = apply_mask(&pre.theta_0, prev)?;
            let out = train(
                model,
                start,
                Some(prev),
                data,
                &recipe,
                0,
                exp.seeds.data,
                &|_| false,
                exp.eval_batch,
            )?;
            epochs += out.history.len() as u64;
            if let Some(detail) = out.status.detail() {
                return Ok(ImpChain {
                    masks,
                    epochs_trained: epochs,
                    halted: Some(format!("IMP round {j}: {detail}")),
                });
            }
            out.weights
        };
        let next = imp_next(prev, &trained, exp.scope)?;
        masks.push(next);
    }
    Ok(ImpChain {
        masks,
        epochs_trained: epochs,
        halted: None,
    })
}

fn require_completed(pre: &RunRecord) -> Result<()> {
    match pre.status.detail() {
        None => Ok(()),
        Some(detail) => Err(Error::Dependency(format!(
            "pretraining at lr {} did not complete: {detail}",
            pre.config.pretrain_lr
        ))),
    }
}

/// One-shot mask at the cell's sparsity from the pretrained weights.
pub fn omp_mask<T: Scalar>(
    exp: &Experiment,
    pre: &PretrainArtifacts<T>,
    sparsity: f64,
) -> Result<Mask> {
    require_completed(&pre.record)?;
    omp(&pre.theta_final, SparsityRatio::new(sparsity)?, exp.scope)
}

/// Nonzero parameter count of a masked network at sparsity `s`.
pub fn masked_param_count(arch: &crate::nn::ArchSpec, s: f64) -> usize {
    let prunable = count_params(arch, ParamScope::Prunable);
    let all = count_params(arch, ParamScope::All);
    let pruned = (s * prunable as f64).floor() as usize;
    all - pruned
}

/// Retrains one subnetwork cell.
///
/// `mask` is required for every protocol except small-dense.
pub fn run_subnet<T: Scalar>(
    exp: &Experiment,
    model: &Model,
    data: &DataSplits,
    cfg: &RunConfig,
    mask: Option<&Mask>,
    pre: &PretrainArtifacts<T>,
) -> Result<RunRecord> {
    let init = cfg
        .kind
        .init()
        .ok_or_else(|| Error::arg("run_subnet does not run pretraining"))?;
    let recipe = exp.recipe_at(cfg.subnet_lr);
    let seed = exp.seeds.data_for(cfg.replicate);
    let need_mask = || mask.ok_or_else(|| Error::Dependency(format!("{} needs a mask", cfg.kind)));
    let record = |achieved: f64, start: u32, out: TrainOutcome<T>| RunRecord {
        run_id: cfg.run_id(exp),
        config: *cfg,
        config_hash: cfg.config_hash(exp),
        seed,
        achieved_sparsity: achieved,
        start_epoch: start,
        history: out.history,
        status: out.status,
        checkpoints: Vec::new(),
    };
    match init {
        InitKind::Lottery | InitKind::Random | InitKind::Rewind => {
            let mask = need_mask()?;
            let (base, start) = match init {
                InitKind::Lottery => (pre.theta_0.clone(), 0),
                InitKind::Random => {
                    let reinit = exp.seeds.reinit_for(cfg.replicate);
                    if reinit == exp.seeds.init {
                        return Err(Error::config(format!(
                            "replicate {} reinit seed collides with the init seed",
                            cfg.replicate
                        )));
                    }
                    let spec = InitSpec {
                        scheme: exp.init,
                        seed: reinit,
                    };
                    (init_weights::<T>(model, spec), 0)
                }
                _ => {
                    require_completed(&pre.record)?;
                    let theta_t = pre.theta_rewind.clone().ok_or_else(|| {
                        Error::Dependency(format!(
                            "no θ_t snapshot at epoch {}",
                            recipe.rewind_epoch
                        ))
                    })?;
                    (theta_t, recipe.rewind_epoch)
                }
            };
            let start_w = apply_mask(&base, mask)?;
            let out = train(
                model,
                start_w,
                Some(mask),
                data,
                &recipe,
                start,
                seed,
                &|_| false,
                exp.eval_batch,
            )?;
            Ok(record(mask.sparsity(), start, out))
        }
        InitKind::SmallDense => {
            let target = masked_param_count(&exp.arch, cfg.sparsity);
            let spec = build_small_dense(&exp.arch, target, exp.sdt_tolerance)?;
            let small = Model::build(&spec)?;
            let w = init_weights::<T>(
                &small,
                InitSpec {
                    scheme: exp.init,
                    seed: exp.seeds.small_dense_for(cfg.replicate),
                },
            );
            let achieved = 1.0
                - count_params(&spec, ParamScope::All) as f64
                    / count_params(&exp.arch, ParamScope::All) as f64;
            let out = train(
                &small,
                w,
                None,
                data,
                &recipe,
                0,
                seed,
                &|_| false,
                exp.eval_batch,
            )?;
            Ok(record(achieved.max(0.0), 0, out))
        }
    }
}

/// Mask a cell needs, from the shared pretraining run and IMP chain.
pub fn mask_for_cell<T: Scalar>(
    exp: &Experiment,
    cfg: &RunConfig,
    pre: &PretrainArtifacts<T>,
    chain: Option<&ImpChain>,
) -> Result<Option<Mask>> {
    match cfg.kind.method() {
        None => Ok(None),
        Some(Method::Omp) => omp_mask(exp, pre, cfg.sparsity).map(Some),
        Some(Method::Imp) => {
            let k = imp_rounds_for(cfg.sparsity)? as usize;
            let chain = chain.ok_or_else(|| Error::Dependency("IMP chain missing".into()))?;
            chain.masks.get(k).cloned().map(Some).ok_or_else(|| {
                let why = chain.halted.as_deref().unwrap_or("not run that far");
                Error::Dependency(format!("IMP chain stops before round {k}: {why}"))
            })
        }
    }
}
