mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lth_core::Error;

/// Lottery-ticket experiments: train, prune, retrain subnetworks, and judge tickets.
#[derive(Parser, Debug)]
#[command(name = "lth", version)]
pub struct Cli {
    /// Output root when the manifest names none.
    #[arg(long, global = true, env = "LTH_OUT", default_value = "lth-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ManifestArg {
    /// Experiment manifest (TOML, or JSON by extension).
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Imp,
    Omp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitArg {
    Lottery,
    Random,
    Rewind,
    SmallDense,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Independent,
    SingleWitness,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassArg {
    Small,
    Medium,
    Large,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TicketArg {
    Lottery,
    Rewind,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the dense network and store θ₀, θ_t and θ_T.
    Pretrain {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Learning rate for pretraining.
        #[arg(long)]
        lr: f64,
    },
    /// Produce masks from a stored pretraining run.
    Prune {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Pretraining learning rate whose snapshots are pruned.
        #[arg(long)]
        lr: f64,
        /// Iterative (imp) or one-shot (omp) magnitude pruning.
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Target sparsity; for imp it must sit on the 1 - 0.8^k schedule.
        #[arg(long, conflicts_with = "iterations")]
        sparsity: Option<f64>,
        /// Number of imp rounds.
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Retrain one subnetwork from stored masks and snapshots.
    Subnet {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Pretraining learning rate the mask came from.
        #[arg(long)]
        lr: f64,
        /// Retraining learning rate (defaults to --lr).
        #[arg(long)]
        subnet_lr: Option<f64>,
        /// Initialisation of the retrained subnetwork.
        #[arg(long, value_enum)]
        init: InitArg,
        /// Pruning method that produced the mask.
        #[arg(long, value_enum, default_value = "imp")]
        method: MethodArg,
        /// Sparsity of the mask to retrain.
        #[arg(long)]
        sparsity: f64,
        /// Replicate index; offsets the data and reinit seeds.
        #[arg(long, default_value_t = 0)]
        replicate: u32,
    },
    /// Run the manifest's whole grid.
    Sweep {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Parallel cells (0 = all cores).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Judge one ticket family from the results log.
    Adjudicate {
        /// Manifest for thresholds, attestation and output root.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Results log (defaults to `<out>/results.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Ticket family: retrained from θ₀ or rewound to θ_t.
        #[arg(long, value_enum, default_value = "lottery")]
        ticket: TicketArg,
        /// Pruning method of the ticket family.
        #[arg(long, value_enum, default_value = "imp")]
        method: MethodArg,
        /// Sparsity level to judge.
        #[arg(long)]
        sparsity: f64,
        /// Restrict to one pretraining learning rate.
        #[arg(long)]
        pretrain_lr: Option<f64>,
        /// How witnesses for the learning-rate conditions are chosen.
        #[arg(long, value_enum, default_value = "independent")]
        mode: ModeArg,
        /// Threshold preset (defaults to the manifest's).
        #[arg(long, value_enum)]
        dataset_class: Option<ClassArg>,
        /// Attest (or deny) that pretraining ran the full recipe length.
        #[arg(long)]
        trained_full: Option<bool>,
    },
    /// Overlap of top-magnitude weights between two snapshots.
    Correlate {
        /// First snapshot.
        #[arg(long)]
        a: PathBuf,
        /// Second snapshot.
        #[arg(long)]
        b: PathBuf,
        /// Fraction of top-magnitude weights compared per layer.
        #[arg(long)]
        p: f64,
        /// Only compare weights kept by this mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Half-width of the band around p where overlap counts as weak.
        #[arg(long, default_value_t = lth_core::adjudicate::WEAK_BAND)]
        band: f64,
    },
    /// Loss surface on the plane of the top two trajectory directions.
    Landscape {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Pretraining learning rate whose trajectory is projected.
        #[arg(long)]
        lr: f64,
        /// Points per axis (odd).
        #[arg(long, default_value_t = 21)]
        grid_n: usize,
        /// Extent of the grid in each direction.
        #[arg(long, default_value_t = 1.0)]
        span: f64,
        /// Use every n-th stored checkpoint.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Training samples used per loss evaluation.
        #[arg(long, default_value_t = 1024)]
        eval_samples: usize,
    },
    /// Aggregate final test accuracies into series.
    Report {
        /// Results log (defaults to `<out>/results.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Output format.
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Only this protocol, e.g. lt-imp.
        #[arg(long)]
        protocol: Option<String>,
        /// Only this sparsity.
        #[arg(long)]
        sparsity: Option<f64>,
        /// Only this pretraining learning rate.
        #[arg(long)]
        pretrain_lr: Option<f64>,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric { .. } => 2,
        Error::Dependency(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
