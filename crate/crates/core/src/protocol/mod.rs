//! Pretraining, IMP chains, subnetwork retraining and learning-rate sweeps.

mod config;
mod kind;
mod run;
mod sweep;

pub use config::{imp_rounds_for, DataSpec, Experiment, RunConfig, Seeds, SweepGrid};
pub use kind::{InitKind, Method, RunKind};
pub use run::{
    batch_loss, epoch_seed, evaluate_dataset, mask_for_cell, masked_param_count, omp_mask,
    run_imp_chain, run_pretrain, run_subnet, train, EpochRecord, ImpChain, PretrainArtifacts,
    RunRecord, RunStatus, TrainOutcome,
};
pub use sweep::{
    imp_mask_path, lr_dir, omp_mask_path, run_sweep, save_chain, save_pretrain, CellSummary,
    SweepOptions, SweepOutcome,
};
