use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kind::{Method, RunKind};
use crate::data::{
    load_cifar_binary, load_idx, load_synthetic, CifarLayout, DataSplits, Dataset, Split,
    SyntheticKind,
};
use crate::error::{Error, Result};
use crate::nn::{ArchSpec, InitScheme};
use crate::optim::TrainRecipe;
use crate::prune::{imp_sparsity, PruneScope, SparsityRatio, IMP_RATE};
use crate::store::SPARSITY_MATCH;

/// Where the train and test splits come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        kind: SyntheticKind,
        n_train: usize,
        n_test: usize,
        num_classes: usize,
        noise: f64,
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Cifar {
        layout: CifarLayout,
        train: Vec<PathBuf>,
        test: PathBuf,
    },
}

impl DataSpec {
    pub fn load(&self) -> Result<DataSplits> {
        match self {
            DataSpec::Synthetic {
                kind,
                n_train,
                n_test,
                num_classes,
                noise,
                seed,
            } => load_synthetic(*kind, *n_train, *n_test, *num_classes, *noise, *seed),
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?.with_split(Split::Test);
                let classes = train.num_classes().max(test.num_classes());
                Ok(DataSplits {
                    train: train.with_num_classes(classes)?,
                    test: test.with_num_classes(classes)?,
                })
            }
            DataSpec::Cifar {
                layout,
                train,
                test,
            } => {
                let parts = train
                    .iter()
                    .map(|p| load_cifar_binary(p, *layout, Split::Train))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DataSplits {
                    train: Dataset::concat(parts)?,
                    test: load_cifar_binary(test, *layout, Split::Test)?,
                })
            }
        }
    }
}

/// Seeds for θ₀, for independent re-initializations, and for data order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub reinit: u64,
    pub data: u64,
}

impl Seeds {
    pub fn data_for(&self, replicate: u32) -> u64 {
        self.data.wrapping_add(replicate as u64)
    }

    pub fn reinit_for(&self, replicate: u32) -> u64 {
        self.reinit.wrapping_add(replicate as u64)
    }

    pub fn small_dense_for(&self, replicate: u32) -> u64 {
        self.init.wrapping_add(replicate as u64)
    }
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_eval_batch() -> usize {
    1000
}

/// Everything shared by the runs of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub arch: ArchSpec,
    pub data: DataSpec,
    pub recipe: TrainRecipe,
    pub seeds: Seeds,
    #[serde(default = "default_scheme")]
    pub init: InitScheme,
    #[serde(default)]
    pub scope: PruneScope,
    /// Relative tolerance of the small-dense parameter match.
    #[serde(default = "default_tolerance")]
    pub sdt_tolerance: f64,
    /// Keep a pretraining checkpoint every this many epochs (0 keeps none).
    #[serde(default)]
    pub checkpoint_stride: u32,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
}

fn default_scheme() -> InitScheme {
    InitScheme::KaimingUniform
}

impl Experiment {
    pub fn new(arch: ArchSpec, data: DataSpec, recipe: TrainRecipe, seeds: Seeds) -> Self {
        Experiment {
            arch,
            data,
            recipe,
            seeds,
            init: default_scheme(),
            scope: PruneScope::Global,
            sdt_tolerance: default_tolerance(),
            checkpoint_stride: 0,
            eval_batch: default_eval_batch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.recipe.validate()?;
        if self.seeds.init == self.seeds.reinit {
            return Err(Error::config(
                "reinit seed must differ from the init seed, otherwise random reinit reproduces the ticket",
            ));
        }
        if !(self.sdt_tolerance > 0.0) {
            return Err(Error::config("sdt_tolerance must be positive"));
        }
        if self.eval_batch == 0 {
            return Err(Error::config("eval_batch must be at least 1"));
        }
        Ok(())
    }

    /// Recipe for a run at learning rate `lr`.
    pub fn recipe_at(&self, lr: f64) -> TrainRecipe {
        self.recipe.clone().with_lr(lr)
    }
}

/// One cell of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: RunKind,
    pub pretrain_lr: f64,
    pub subnet_lr: f64,
    /// Nominal sparsity of the cell (0 for pretraining).
    pub sparsity: f64,
    pub replicate: u32,
}

impl RunConfig {
    pub fn pretrain(lr: f64) -> Self {
        RunConfig {
            kind: RunKind::Pretrain,
            pretrain_lr: lr,
            subnet_lr: lr,
            sparsity: 0.0,
            replicate: 0,
        }
    }

    /// Hash of the experiment plus this cell, excluding the replicate index.
    pub fn config_hash(&self, exp: &Experiment) -> String {
        let mut cell = *self;
        cell.replicate = 0;
        let json = serde_json::to_vec(&(exp, cell)).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn run_id(&self, exp: &Experiment) -> String {
        format!(
            "{}-p{}-s{}-sp{:.4}-{}",
            self.kind,
            self.pretrain_lr,
            self.subnet_lr,
            self.sparsity,
            self.config_hash(exp)
        )
    }
}

/// Number of IMP rounds whose sparsity matches `s`.
pub fn imp_rounds_for(s: f64) -> Result<u32> {
    SparsityRatio::new(s)?;
    let k = ((1.0 - s).ln() / (1.0 - IMP_RATE).ln()).round() as u32;
    let got = imp_sparsity(k).value();
    if (got - s).abs() > SPARSITY_MATCH {
        return Err(Error::config(format!(
            "sparsity {s} is not on the IMP schedule; nearest is {got:.4} after {k} rounds"
        )));
    }
    Ok(k)
}

/// The grid of a sweep. Without `subnet_lrs` every subnetwork is retrained at its
/// pretraining rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub protocols: Vec<RunKind>,
    pub pretrain_lrs: Vec<f64>,
    #[serde(default)]
    pub subnet_lrs: Option<Vec<f64>>,
    pub sparsities: Vec<f64>,
    #[serde(default = "one")]
    pub replicates: u32,
}

fn one() -> u32 {
    1
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.pretrain_lrs.is_empty() {
            return Err(Error::arg(
                "empty grid: sweep needs at least one pretrain lr",
            ));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        let lrs = self
            .pretrain_lrs
            .iter()
            .chain(self.subnet_lrs.iter().flatten());
        for &lr in lrs {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!(
                    "learning rate {lr} must be positive"
                )));
            }
        }
        if self.subnet_lrs.as_ref().is_some_and(|v| v.is_empty()) {
            return Err(Error::config("subnet_lrs, when given, must be non-empty"));
        }
        for &s in &self.sparsities {
            SparsityRatio::new(s)?;
        }
        if self
            .protocols
            .iter()
            .any(|k| k.method() == Some(Method::Imp))
        {
            for &s in &self.sparsities {
                imp_rounds_for(s)?;
            }
        }
        let subnets = self.protocols.iter().any(|k| *k != RunKind::Pretrain);
        if subnets && self.sparsities.is_empty() {
            return Err(Error::arg(
                "empty grid: subnetwork protocols need at least one sparsity",
            ));
        }
        Ok(())
    }

    /// Checks grid requirements that depend on the experiment.
    pub fn validate_for(&self, exp: &Experiment) -> Result<()> {
        self.validate()?;
        let rewinds = self.protocols.iter().any(|k| matches!(k, RunKind::Wr(_)));
        if rewinds && exp.recipe.rewind_epoch == 0 {
            return Err(Error::config(
                "weight rewinding needs 0 < rewind_epoch < total_epochs",
            ));
        }
        Ok(())
    }

    /// All subnetwork cells, pretraining excluded.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &p in &self.pretrain_lrs {
            let subnet: Vec<f64> = self.subnet_lrs.clone().unwrap_or_else(|| vec![p]);
            for &lr in &subnet {
                for &s in &self.sparsities {
                    for &kind in self.protocols.iter().filter(|k| **k != RunKind::Pretrain) {
                        for r in 0..self.replicates {
                            out.push(RunConfig {
                                kind,
                                pretrain_lr: p,
                                subnet_lr: lr,
                                sparsity: s,
                                replicate: r,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}
