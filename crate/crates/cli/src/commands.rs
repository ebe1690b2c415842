use std::path::{Path, PathBuf};

use lth_core::adjudicate::{
    adjudicate_run, correlation_indicator, DatasetClass, QuantifierMode, TableQuery, TicketSource,
};
use lth_core::landscape::{
    eval_subsample, loss_grid, pca_directions, project_trajectory, write_grid_csv,
    write_trajectory_csv,
};
use lth_core::nn::Model;
use lth_core::protocol::{
    batch_loss, imp_mask_path, imp_rounds_for, lr_dir, omp_mask, omp_mask_path, run_imp_chain,
    run_pretrain, run_subnet, run_sweep, save_chain, save_pretrain, Method, PretrainArtifacts,
    RunConfig, RunKind, RunRecord, RunStatus, SweepOptions,
};
use lth_core::store::{
    emit_report, read_mask, read_results, read_snapshot, read_snapshot_for, write_mask,
    ReportFilter, ReportFormat, ResultsLog,
};
use lth_core::{Error, Result, Snapshot32};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{Effective, Manifest};
use crate::{ClassArg, Cli, Command, FormatArg, InitArg, MethodArg, ModeArg, TicketArg};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Prints the effective configuration and writes it under `<out>/effective/`.
fn echo<C: Serialize>(out: &Path, command: &str, config: &C) -> Result<()> {
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    eprintln!("effective configuration ({command}):\n{text}");
    let dir = out.join("effective");
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let path = dir.join(format!("{command}.json"));
    std::fs::write(&path, text + "\n").map_err(io(&path))
}

fn effective(
    manifest: &Path,
    default_out: &Path,
    command: &str,
    extra: serde_json::Value,
) -> Result<Effective> {
    let eff = Manifest::load(manifest)?.expand(default_out)?;
    echo(
        &eff.out_dir,
        command,
        &json!({ "manifest": eff, "arguments": extra }),
    )?;
    Ok(eff)
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Imp => Method::Imp,
        MethodArg::Omp => Method::Omp,
    }
}

fn results_path(out: &Path) -> PathBuf {
    out.join("results.jsonl")
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Dependency(format!("{} not found", path.display())))
    }
}

fn fail_on_divergence(r: &RunRecord) -> Result<()> {
    match &r.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Diverged { detail } => Err(Error::Numeric {
            location: r.run_id.clone(),
            detail: detail.clone(),
        }),
        RunStatus::Failed { detail } => Err(Error::Dependency(detail.clone())),
    }
}

fn print_final(r: &RunRecord) {
    if let Some((loss, acc)) = r.final_test() {
        println!(
            "{}: final test accuracy {acc:.2}% (loss {loss:.4})",
            r.run_id
        );
    }
}

/// Reassembles a stored pretraining run for downstream commands.
fn load_pretrain(eff: &Effective, model: &Model, lr: f64) -> Result<PretrainArtifacts<f32>> {
    let dir = lr_dir(&eff.out_dir, lr);
    let read = |name: &str| -> Result<Snapshot32> {
        let p = dir.join(name);
        require(&p)?;
        read_snapshot_for(&p, model.arch_hash())
    };
    let theta_0 = read("theta_0.lths")?;
    let theta_final = read("theta_final.lths")?;
    let theta_rewind = dir
        .join("theta_t.lths")
        .exists()
        .then(|| read("theta_t.lths"))
        .transpose()?;
    let exp = &eff.experiment;
    let cfg = RunConfig::pretrain(lr);
    Ok(PretrainArtifacts {
        theta_0,
        theta_rewind,
        theta_final,
        trajectory: Vec::new(),
        record: RunRecord {
            run_id: cfg.run_id(exp),
            config_hash: cfg.config_hash(exp),
            config: cfg,
            seed: exp.seeds.data,
            achieved_sparsity: 0.0,
            start_epoch: 0,
            history: Vec::new(),
            status: RunStatus::Completed,
            checkpoints: Vec::new(),
        },
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Pretrain { manifest, lr } => {
            let eff = effective(&manifest.manifest, out, "pretrain", json!({ "lr": lr }))?;
            let exp = &eff.experiment;
            let model = Model::build(&exp.arch)?;
            let data = exp.data.load()?;
            let mut pre = run_pretrain::<f32>(exp, &model, &data, lr)?;
            pre.record.checkpoints = save_pretrain(&eff.out_dir, &pre)?;
            ResultsLog::open(&results_path(&eff.out_dir))?.append(&pre.record.results())?;
            for p in &pre.record.checkpoints {
                println!("wrote {}", p.display());
            }
            print_final(&pre.record);
            fail_on_divergence(&pre.record)
        }
        Command::Prune {
            manifest,
            lr,
            method: m,
            sparsity,
            iterations,
        } => {
            let args = json!({ "lr": lr, "method": format!("{m:?}"), "sparsity": sparsity, "iterations": iterations });
            let eff = effective(&manifest.manifest, out, "prune", args)?;
            let exp = &eff.experiment;
            let model = Model::build(&exp.arch)?;
            let pre = load_pretrain(&eff, &model, lr)?;
            match method(m) {
                Method::Omp => {
                    let s =
                        sparsity.ok_or_else(|| Error::Argument("omp needs --sparsity".into()))?;
                    let mask = omp_mask(exp, &pre, s)?;
                    let path = omp_mask_path(&eff.out_dir, lr, s);
                    write_mask(&path, &mask)?;
                    println!("wrote {} (sparsity {:.4})", path.display(), mask.sparsity());
                    Ok(())
                }
                Method::Imp => {
                    let k = match (iterations, sparsity) {
                        (Some(k), _) => k,
                        (None, Some(s)) => imp_rounds_for(s)?,
                        (None, None) => {
                            return Err(Error::Argument(
                                "imp needs --iterations or --sparsity".into(),
                            ))
                        }
                    };
                    let data = exp.data.load()?;
                    let chain = run_imp_chain(exp, &model, &data, &pre, k)?;
                    save_chain(&eff.out_dir, lr, &chain)?;
                    for (j, m) in chain.masks.iter().enumerate().skip(1) {
                        println!(
                            "round {j}: sparsity {:.4} -> {}",
                            m.sparsity(),
                            imp_mask_path(&eff.out_dir, lr, j as u32).display()
                        );
                    }
                    println!("training epochs: {}", chain.epochs_trained);
                    match chain.halted {
                        Some(why) => Err(Error::Numeric {
                            location: "IMP chain".into(),
                            detail: why,
                        }),
                        None => Ok(()),
                    }
                }
            }
        }
        Command::Subnet {
            manifest,
            lr,
            subnet_lr,
            init,
            method: m,
            sparsity,
            replicate,
        } => {
            let args = json!({
                "lr": lr, "subnet_lr": subnet_lr, "init": format!("{init:?}"),
                "method": format!("{m:?}"), "sparsity": sparsity, "replicate": replicate,
            });
            let eff = effective(&manifest.manifest, out, "subnet", args)?;
            let exp = &eff.experiment;
            let model = Model::build(&exp.arch)?;
            let m = method(m);
            let kind = match init {
                InitArg::Lottery => RunKind::Lt(m),
                InitArg::Random => RunKind::Rr(m),
                InitArg::Rewind => RunKind::Wr(m),
                InitArg::SmallDense => RunKind::Sdt,
            };
            let cfg = RunConfig {
                kind,
                pretrain_lr: lr,
                subnet_lr: subnet_lr.unwrap_or(lr),
                sparsity,
                replicate,
            };
            let pre = load_pretrain(&eff, &model, lr)?;
            let mask = if kind == RunKind::Sdt {
                None
            } else {
                let path = match m {
                    Method::Imp => imp_mask_path(&eff.out_dir, lr, imp_rounds_for(sparsity)?),
                    Method::Omp => omp_mask_path(&eff.out_dir, lr, sparsity),
                };
                require(&path)?;
                Some(read_mask(&path)?)
            };
            let data = exp.data.load()?;
            let rec = run_subnet(exp, &model, &data, &cfg, mask.as_ref(), &pre)?;
            ResultsLog::open(&results_path(&eff.out_dir))?.append(&rec.results())?;
            print_final(&rec);
            fail_on_divergence(&rec)
        }
        Command::Sweep { manifest, jobs } => {
            let eff = effective(&manifest.manifest, out, "sweep", json!({ "jobs": jobs }))?;
            let grid = eff
                .sweep
                .clone()
                .ok_or_else(|| Error::Config("manifest has no [sweep] table".into()))?;
            let log = ResultsLog::open(&results_path(&eff.out_dir))?;
            let progress = |line: &str| println!("{line}");
            let opts = SweepOptions {
                jobs,
                dedup: true,
                log: Some(&log),
                artifacts: Some(eff.out_dir.clone()),
                progress: Some(&progress),
            };
            let outcome = run_sweep::<f32>(&eff.experiment, &grid, &opts)?;
            let path = eff.out_dir.join("sweep_summary.json");
            let text = serde_json::to_string_pretty(&outcome.table).expect("table serializes");
            std::fs::write(&path, text + "\n").map_err(io(&path))?;
            let failed: usize = outcome.table.iter().map(|c| c.failed).sum();
            println!(
                "{} runs ({} pretraining, {} IMP chains), {failed} failed; summary in {}",
                outcome.records.len(),
                outcome.pretrain_runs,
                outcome.imp_chains,
                path.display()
            );
            Ok(())
        }
        Command::Adjudicate {
            manifest,
            log,
            ticket,
            method: m,
            sparsity,
            pretrain_lr,
            mode,
            dataset_class,
            trained_full,
        } => {
            let eff = manifest
                .as_deref()
                .map(|p| Manifest::load(p)?.expand(out))
                .transpose()?;
            let root = eff.as_ref().map_or(out, |e| e.out_dir.as_path());
            let log = log.unwrap_or_else(|| results_path(root));
            require(&log)?;
            let records = read_results(&log)?;
            let class = dataset_class.map(|c| match c {
                ClassArg::Small => DatasetClass::Small,
                ClassArg::Medium => DatasetClass::Medium,
                ClassArg::Large => DatasetClass::Large,
            });
            let thresholds = match (&eff, class) {
                (Some(e), None) => e.thresholds,
                (Some(_), Some(c)) => {
                    let mut spec =
                        Manifest::load(manifest.as_deref().expect("manifest"))?.thresholds;
                    spec.dataset_class = Some(c);
                    spec.resolve(c)
                }
                (None, c) => lth_core::adjudicate::VerdictThresholds::for_class(
                    c.unwrap_or(DatasetClass::Small),
                ),
            };
            let trained_full = trained_full
                .or(eff.as_ref().map(|e| e.trained_full))
                .unwrap_or(false);
            let mode = match mode {
                ModeArg::Independent => QuantifierMode::Independent,
                ModeArg::SingleWitness => QuantifierMode::SingleWitness,
            };
            let q = TableQuery {
                ticket: match ticket {
                    TicketArg::Lottery => TicketSource::Lottery,
                    TicketArg::Rewind => TicketSource::Rewind,
                },
                method: method(m),
                sparsity,
                pretrain_lr,
            };
            echo(
                root,
                "adjudicate",
                &json!({ "log": log, "query": q, "thresholds": thresholds, "mode": mode, "trained_full": trained_full }),
            )?;
            let adj = adjudicate_run(&records, &q, &thresholds, mode, trained_full)?;
            print!("{}", adj.render());
            ResultsLog::open(&log)?.append_verdict(&adj)
        }
        Command::Correlate {
            a,
            b,
            p,
            mask,
            band,
        } => {
            echo(
                out,
                "correlate",
                &json!({ "a": a, "b": b, "p": p, "mask": mask, "band": band }),
            )?;
            for f in [&a, &b] {
                require(f)?;
            }
            let (sa, sb) = (read_snapshot(&a)?, read_snapshot(&b)?);
            let mask = mask
                .map(|m| {
                    require(&m)?;
                    read_mask(&m)
                })
                .transpose()?;
            let report = correlation_indicator(&sa, &sb, p, mask.as_ref(), band)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Command::Landscape {
            manifest,
            lr,
            grid_n,
            span,
            stride,
            eval_samples,
        } => {
            let args = json!({ "lr": lr, "grid_n": grid_n, "span": span, "stride": stride, "eval_samples": eval_samples });
            let eff = effective(&manifest.manifest, out, "landscape", args)?;
            if stride == 0 {
                return Err(Error::Argument("--stride must be at least 1".into()));
            }
            let exp = &eff.experiment;
            let model = Model::build(&exp.arch)?;
            let dir = lr_dir(&eff.out_dir, lr);
            let ckdir = dir.join("checkpoints");
            require(&ckdir)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&ckdir)
                .map_err(io(&ckdir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "lths"))
                .collect();
            files.sort();
            let last = files.len().saturating_sub(1);
            let picked: Vec<&PathBuf> = files
                .iter()
                .enumerate()
                .filter(|(i, _)| i % stride == 0 || *i == last)
                .map(|(_, p)| p)
                .collect();
            let traj = picked
                .iter()
                .map(|p| read_snapshot_for(p, model.arch_hash()))
                .collect::<Result<Vec<_>>>()?;
            let dirs = pca_directions(&traj)?;
            let center = traj.last().expect("at least 3 checkpoints");
            let points = project_trajectory(&traj, center, &dirs)?;
            let data = exp.data.load()?;
            let batch = eval_subsample(&data.test, eval_samples, exp.seeds.data);
            let grid = loss_grid(
                |w: &Snapshot32| batch_loss(&model, w, &batch),
                center,
                &dirs,
                span,
                grid_n,
            )?;
            let outdir = dir.join("landscape");
            std::fs::create_dir_all(&outdir).map_err(io(&outdir))?;
            write_grid_csv(&outdir.join("grid.csv"), &grid)?;
            write_trajectory_csv(&outdir.join("trajectory.csv"), &points)?;
            let meta = json!({
                "checkpoints": picked,
                "explained_variance": dirs.explained,
                "eval_samples": batch.len(),
                "grid_n": grid_n,
                "span": span,
                "center_loss": grid.center(),
                "non_finite_cells": grid.non_finite.iter().filter(|&&b| b).count(),
            });
            let meta_path = outdir.join("landscape.json");
            std::fs::write(
                &meta_path,
                serde_json::to_string_pretty(&meta).expect("json") + "\n",
            )
            .map_err(io(&meta_path))?;
            println!(
                "{} checkpoints, explained variance {:.4} / {:.4}; wrote {}",
                traj.len(),
                dirs.explained[0],
                dirs.explained[1],
                outdir.display()
            );
            Ok(())
        }
        Command::Report {
            log,
            format,
            protocol,
            sparsity,
            pretrain_lr,
            output,
        } => {
            let log = log.unwrap_or_else(|| results_path(out));
            let filter = ReportFilter {
                protocol: protocol.as_deref().map(str::parse).transpose()?,
                sparsity,
                pretrain_lr,
            };
            let fmt = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            };
            echo(
                out,
                "report",
                &json!({ "log": log, "format": fmt, "protocol": protocol, "sparsity": sparsity,
                         "pretrain_lr": pretrain_lr, "output": output }),
            )?;
            require(&log)?;
            let text = emit_report(&read_results(&log)?, &filter, fmt)?;
            match output {
                Some(p) => std::fs::write(&p, text).map_err(io(&p)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}
