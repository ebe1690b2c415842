use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{imp_rounds_for, Experiment, RunConfig, SweepGrid};
use super::kind::{Method, RunKind};
use super::run::{
    mask_for_cell, run_imp_chain, run_pretrain, run_subnet, ImpChain, PretrainArtifacts, RunRecord,
    RunStatus,
};
use crate::data::DataSplits;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::scalar::Scalar;
use crate::store::{mean_std, same_lr, write_mask, write_snapshot, ResultsLog};

pub struct SweepOptions<'a> {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Share one pretraining run and IMP chain per pretraining lr. Without it every
    /// cell recomputes its own.
    pub dedup: bool,
    pub log: Option<&'a ResultsLog>,
    /// Directory for θ₀/θ_t/θ_T snapshots, checkpoints and masks.
    pub artifacts: Option<PathBuf>,
    pub progress: Option<&'a (dyn Fn(&str) + Sync)>,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        SweepOptions {
            jobs: 0,
            dedup: true,
            log: None,
            artifacts: None,
            progress: None,
        }
    }
}

/// Replicate statistics for one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub kind: RunKind,
    pub pretrain_lr: f64,
    pub subnet_lr: f64,
    pub sparsity: f64,
    /// Final test accuracies (percent) of the completed replicates.
    pub accuracies: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub failed: usize,
}

pub struct SweepOutcome {
    pub table: Vec<CellSummary>,
    pub records: Vec<RunRecord>,
    pub pretrain_runs: usize,
    pub imp_chains: usize,
}

struct Shared<T> {
    pre: PretrainArtifacts<T>,
    chain: Option<ImpChain>,
}

fn max_rounds(grid: &SweepGrid) -> Result<u32> {
    if !grid
        .protocols
        .iter()
        .any(|k| k.method() == Some(Method::Imp))
    {
        return Ok(0);
    }
    grid.sparsities
        .iter()
        .map(|&s| imp_rounds_for(s))
        .try_fold(0, |m, k| Ok(m.max(k?)))
}

/// Artifact directory of one pretraining lr.
pub fn lr_dir(root: &Path, lr: f64) -> PathBuf {
    root.join(format!("lr_{lr}"))
}

/// Writes θ₀, θ_t, θ_T and the trajectory under `root/lr_<lr>/`, returning the paths.
pub fn save_pretrain<T: Scalar>(root: &Path, pre: &PretrainArtifacts<T>) -> Result<Vec<PathBuf>> {
    let dir = lr_dir(root, pre.record.config.pretrain_lr);
    let mut files = vec![(dir.join("theta_0.lths"), &pre.theta_0)];
    if let Some(t) = &pre.theta_rewind {
        files.push((dir.join("theta_t.lths"), t));
    }
    if pre.record.completed() {
        files.push((dir.join("theta_final.lths"), &pre.theta_final));
    }
    for c in &pre.trajectory {
        files.push((
            dir.join(format!("checkpoints/epoch_{:05}.lths", c.meta.epoch)),
            c,
        ));
    }
    for (p, s) in &files {
        write_snapshot(p, &s.cast())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn imp_mask_path(root: &Path, lr: f64, rounds: u32) -> PathBuf {
    lr_dir(root, lr).join(format!("masks/imp_{rounds}.lthm"))
}

/// OMP mask file, named by the nominal sparsity.
pub fn omp_mask_path(root: &Path, lr: f64, sparsity: f64) -> PathBuf {
    lr_dir(root, lr).join(format!("masks/omp_{sparsity:.4}.lthm"))
}

pub fn save_chain(root: &Path, lr: f64, chain: &ImpChain) -> Result<()> {
    for (k, m) in chain.masks.iter().enumerate().skip(1) {
        write_mask(&imp_mask_path(root, lr, k as u32), m)?;
    }
    Ok(())
}

fn build_shared<T: Scalar>(
    exp: &Experiment,
    model: &Model,
    data: &DataSplits,
    lr: f64,
    rounds: u32,
) -> Result<Shared<T>> {
    let pre = run_pretrain::<T>(exp, model, data, lr)?;
    let chain = if rounds > 0 && pre.record.completed() {
        Some(run_imp_chain(exp, model, data, &pre, rounds)?)
    } else {
        None
    };
    Ok(Shared { pre, chain })
}

fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut table: Vec<CellSummary> = Vec::new();
    for r in records {
        let c = &r.config;
        let idx = table.iter().position(|s| {
            s.kind == c.kind
                && same_lr(s.pretrain_lr, c.pretrain_lr)
                && same_lr(s.subnet_lr, c.subnet_lr)
                && s.sparsity == c.sparsity
        });
        let idx = idx.unwrap_or_else(|| {
            table.push(CellSummary {
                kind: c.kind,
                pretrain_lr: c.pretrain_lr,
                subnet_lr: c.subnet_lr,
                sparsity: c.sparsity,
                accuracies: Vec::new(),
                mean: None,
                std: None,
                failed: 0,
            });
            table.len() - 1
        });
        match r.final_test() {
            Some((_, acc)) => table[idx].accuracies.push(acc),
            None => table[idx].failed += 1,
        }
    }
    for s in &mut table {
        if !s.accuracies.is_empty() {
            let (m, sd) = mean_std(&s.accuracies);
            s.mean = Some(m);
            s.std = Some(sd);
        }
    }
    table
}

/// Runs a full grid: pretraining per pretraining lr, IMP chains, then every
/// subnetwork cell. Divergent cells are recorded as failed; any other error aborts.
pub fn run_sweep<T: Scalar>(
    exp: &Experiment,
    grid: &SweepGrid,
    opts: &SweepOptions<'_>,
) -> Result<SweepOutcome> {
    exp.validate()?;
    grid.validate_for(exp)?;
    let model = Model::build(&exp.arch)?;
    let data = exp.data.load()?;
    if data.train.num_classes() > exp.arch.num_classes {
        return Err(Error::config(format!(
            "data has {} classes but the network has {} outputs",
            data.train.num_classes(),
            exp.arch.num_classes
        )));
    }
    let rounds = max_rounds(grid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let emit = |r: &RunRecord| -> Result<()> {
        if let Some(log) = opts.log {
            log.append(&r.results())?;
        }
        if let Some(p) = opts.progress {
            let acc = r
                .final_test()
                .map_or_else(|| "failed".to_string(), |(_, a)| format!("{a:.2}%"));
            p(&format!(
                "{} pretrain_lr={} subnet_lr={} sparsity={:.4} replicate={}: {acc}",
                r.config.kind,
                r.config.pretrain_lr,
                r.config.subnet_lr,
                r.config.sparsity,
                r.config.replicate
            ));
        }
        Ok(())
    };

    pool.install(|| {
        let mut lrs: Vec<f64> = Vec::new();
        for &lr in &grid.pretrain_lrs {
            if !lrs.iter().any(|&x| same_lr(x, lr)) {
                lrs.push(lr);
            }
        }
        let shared: Vec<Shared<T>> = lrs
            .par_iter()
            .map(|&lr| {
                let mut s = build_shared::<T>(exp, &model, &data, lr, rounds)?;
                if let Some(root) = &opts.artifacts {
                    s.pre.record.checkpoints = save_pretrain(root, &s.pre)?;
                    if let Some(c) = &s.chain {
                        save_chain(root, lr, c)?;
                    }
                }
                emit(&s.pre.record)?;
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let find = |lr: f64| {
            shared
                .iter()
                .position(|s| same_lr(s.pre.record.config.pretrain_lr, lr))
                .expect("pretrain lr")
        };

        let cells = grid.cells();
        let subnet: Vec<RunRecord> = cells
            .par_iter()
            .map(|cfg| -> Result<RunRecord> {
                let own;
                let sh = if opts.dedup {
                    &shared[find(cfg.pretrain_lr)]
                } else {
                    own = build_shared::<T>(exp, &model, &data, cfg.pretrain_lr, rounds)?;
                    &own
                };
                let attempt = || -> Result<RunRecord> {
                    let mask = mask_for_cell(exp, cfg, &sh.pre, sh.chain.as_ref())?;
                    if let (Some(root), Some(m), Some(Method::Omp)) =
                        (&opts.artifacts, &mask, cfg.kind.method())
                    {
                        write_mask(&omp_mask_path(root, cfg.pretrain_lr, cfg.sparsity), m)?;
                    }
                    run_subnet(exp, &model, &data, cfg, mask.as_ref(), &sh.pre)
                };
                let rec = match attempt() {
                    Ok(r) => r,
                    Err(e @ Error::Io { .. }) => return Err(e),
                    Err(e) => failed_record(exp, cfg, e.to_string()),
                };
                emit(&rec)?;
                Ok(rec)
            })
            .collect::<Result<_>>()?;

        let mut records: Vec<RunRecord> = shared.iter().map(|s| s.pre.record.clone()).collect();
        records.extend(subnet);
        let pretrain_runs = if opts.dedup {
            shared.len()
        } else {
            shared.len() + cells.len()
        };
        let imp_chains = shared.iter().filter(|s| s.chain.is_some()).count();
        Ok(SweepOutcome {
            table: summarize(&records),
            records,
            pretrain_runs,
            imp_chains,
        })
    })
}

fn failed_record(exp: &Experiment, cfg: &RunConfig, detail: String) -> RunRecord {
    RunRecord {
        run_id: cfg.run_id(exp),
        config: *cfg,
        config_hash: cfg.config_hash(exp),
        seed: exp.seeds.data_for(cfg.replicate),
        achieved_sparsity: cfg.sparsity,
        start_epoch: 0,
        history: Vec::new(),
        status: RunStatus::Failed { detail },
        checkpoints: Vec::new(),
    }
}
