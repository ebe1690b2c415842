use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::verdict::{
    check_conditions, classify, AccuracyTable, ConditionReport, LrRow, Outcome, QuantifierMode,
    Stat, TicketClass, VerdictThresholds,
};
use crate::error::{Error, Result};
use crate::protocol::{Method, RunKind};
use crate::store::{mean_std, same_lr, ResultRecord, SPARSITY_MATCH};

/// Which ticket family to judge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TicketSource {
    Lottery,
    Rewind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableQuery {
    pub ticket: TicketSource,
    pub method: Method,
    pub sparsity: f64,
    /// Restrict subnetwork rows to one pretraining lr. Without it, a log with a
    /// single pretraining lr uses that one, otherwise rows retrained at their own
    /// pretraining lr are used.
    pub pretrain_lr: Option<f64>,
}

impl TableQuery {
    pub fn ticket_kind(&self) -> RunKind {
        match self.ticket {
            TicketSource::Lottery => RunKind::Lt(self.method),
            TicketSource::Rewind => RunKind::Wr(self.method),
        }
    }
}

fn stat(xs: &[f64]) -> Option<Stat> {
    if xs.is_empty() {
        return None;
    }
    let (mean, std) = mean_std(xs);
    Some(Stat {
        mean,
        std,
        n: xs.len(),
    })
}

/// Assembles the per-lr accuracy table from final test rows of a results log.
pub fn build_table(
    records: &[ResultRecord],
    q: &TableQuery,
    trained_full: bool,
) -> Result<AccuracyTable> {
    let finals: Vec<&ResultRecord> = records.iter().filter(|r| r.is_final_test()).collect();
    let ticket = q.ticket_kind();
    let at_sparsity = |r: &&&ResultRecord| (r.sparsity - q.sparsity).abs() <= SPARSITY_MATCH;
    let subnet_kinds = [ticket, RunKind::Rr(q.method), RunKind::Sdt];
    let subnet: Vec<&ResultRecord> = finals
        .iter()
        .filter(|r| subnet_kinds.contains(&r.protocol))
        .filter(at_sparsity)
        .copied()
        .collect();

    let pretrain_lr = q.pretrain_lr.or_else(|| {
        let mut lrs: Vec<f64> = subnet
            .iter()
            .filter(|r| r.protocol == ticket)
            .map(|r| r.pretrain_lr)
            .collect();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup_by(|a, b| same_lr(*a, *b));
        (lrs.len() == 1).then(|| lrs[0])
    });
    let keep_subnet = |r: &&ResultRecord| match pretrain_lr {
        Some(p) => same_lr(r.pretrain_lr, p),
        None => same_lr(r.pretrain_lr, r.subnet_lr),
    };
    let subnet: Vec<&ResultRecord> = subnet.into_iter().filter(keep_subnet).collect();
    let pretrain: Vec<&ResultRecord> = finals
        .iter()
        .filter(|r| r.protocol == RunKind::Pretrain)
        .copied()
        .collect();

    let mut missing = Vec::new();
    if pretrain.is_empty() {
        missing.push(RunKind::Pretrain.to_string());
    }
    if !subnet.iter().any(|r| r.protocol == ticket) {
        missing.push(ticket.to_string());
    }
    if !missing.is_empty() {
        return Err(Error::Dependency(format!(
            "no final test rows for {} at sparsity {}",
            missing.join(", "),
            q.sparsity
        )));
    }

    let mut lrs: Vec<f64> = subnet
        .iter()
        .map(|r| r.subnet_lr)
        .chain(pretrain.iter().map(|r| r.pretrain_lr))
        .collect();
    lrs.sort_by(f64::total_cmp);
    lrs.dedup_by(|a, b| same_lr(*a, *b));
    let col = |kind: RunKind, lr: f64| {
        let xs: Vec<f64> = subnet
            .iter()
            .filter(|r| r.protocol == kind && same_lr(r.subnet_lr, lr))
            .map(|r| r.accuracy)
            .collect();
        stat(&xs)
    };
    let rows = lrs
        .iter()
        .map(|&lr| LrRow {
            lr,
            pretrain: stat(
                &pretrain
                    .iter()
                    .filter(|r| same_lr(r.pretrain_lr, lr))
                    .map(|r| r.accuracy)
                    .collect::<Vec<_>>(),
            ),
            lt: col(ticket, lr),
            rr: col(RunKind::Rr(q.method), lr),
            sdt: col(RunKind::Sdt, lr),
        })
        .collect();
    Ok(AccuracyTable {
        sparsity: q.sparsity,
        trained_full,
        rows,
    })
}

/// A verdict with its evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub ticket: RunKind,
    pub sparsity: f64,
    pub pretrain_lr: Option<f64>,
    pub class: TicketClass,
    pub best_lt: Option<(f64, f64)>,
    pub report: ConditionReport,
    pub table: AccuracyTable,
}

const NAMES: [&str; 5] = [
    "sparse and fully trained",
    "beats small dense",
    "beats random reinit",
    "matches pretraining at its lr",
    "matches best pretraining",
];

impl Adjudication {
    /// Human-readable report.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let fmt = |x: Option<Stat>| {
            x.map_or_else(
                || "-".to_string(),
                |s| format!("{:.2} ± {:.2}", s.mean, s.std),
            )
        };
        let _ = writeln!(s, "ticket {} at sparsity {:.4}", self.ticket, self.sparsity);
        if let Some(p) = self.pretrain_lr {
            let _ = writeln!(s, "subnetworks pruned from pretraining at lr {p}");
        }
        let th = &self.report.thresholds;
        let _ = writeln!(
            s,
            "mode {:?}; delta_similar {}, delta_gap {}, s_min {}",
            self.report.mode, th.delta_similar, th.delta_gap, th.s_min
        );
        let _ = writeln!(
            s,
            "{:<10} {:>15} {:>15} {:>15} {:>15}",
            "lr", "pretrain", "ticket", "random", "small-dense"
        );
        for r in &self.table.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>15} {:>15} {:>15} {:>15}",
                r.lr,
                fmt(r.pretrain),
                fmt(r.lt),
                fmt(r.rr),
                fmt(r.sdt)
            );
        }
        for (i, c) in self.report.conditions.iter().enumerate() {
            let tag = match c.outcome {
                Outcome::Pass => "PASS",
                Outcome::Fail => "FAIL",
                Outcome::NotEvaluated => "N/A ",
            };
            let wit = c
                .witness_lr
                .map_or_else(String::new, |lr| format!(" (lr {lr})"));
            let _ = writeln!(s, "[{tag}] {} {}{wit}: {}", i + 1, NAMES[i], c.detail);
        }
        if let Some((lr, acc)) = self.best_lt {
            let _ = writeln!(s, "best ticket accuracy {acc:.2} at lr {lr}");
        }
        let _ = writeln!(s, "class: {:?}", self.class);
        s
    }
}

pub fn adjudicate_run(
    records: &[ResultRecord],
    q: &TableQuery,
    thresholds: &VerdictThresholds,
    mode: QuantifierMode,
    trained_full: bool,
) -> Result<Adjudication> {
    let table = build_table(records, q, trained_full)?;
    let report = check_conditions(&table, thresholds, mode)?;
    Ok(Adjudication {
        ticket: q.ticket_kind(),
        sparsity: q.sparsity,
        pretrain_lr: q.pretrain_lr,
        class: classify(&report),
        best_lt: table.best_lt(),
        report,
        table,
    })
}
