//! Aggregated tables over the final test rows of a results log.

use serde::Serialize;

use super::results::ResultRecord;
use crate::error::{Error, Result};
use crate::protocol::RunKind;

/// Sparsities closer than this are treated as the same grid point.
pub const SPARSITY_MATCH: f64 = 5e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::arg(format!(
                "unknown report format {s:?} (csv or json)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFilter {
    pub protocol: Option<RunKind>,
    pub sparsity: Option<f64>,
    pub pretrain_lr: Option<f64>,
}

impl ReportFilter {
    fn keeps(&self, r: &ResultRecord) -> bool {
        self.protocol.is_none_or(|p| p == r.protocol)
            && self
                .sparsity
                .is_none_or(|s| (s - r.sparsity).abs() <= SPARSITY_MATCH)
            && self.pretrain_lr.is_none_or(|lr| same_lr(lr, r.pretrain_lr))
    }
}

pub(crate) fn same_lr(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// One point of a series: replicate mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub series: RunKind,
    pub pretrain_lr: f64,
    pub subnet_lr: f64,
    pub sparsity: f64,
    pub n: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Sample mean and standard deviation (`n − 1` denominator; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups final test rows by series, learning rates and sparsity. Rows are ordered
/// by series, subnet lr, pretrain lr, then sparsity.
pub fn report_rows(records: &[ResultRecord], filter: &ReportFilter) -> Result<Vec<ReportRow>> {
    let mut groups: Vec<(RunKind, f64, f64, f64, Vec<f64>)> = Vec::new();
    for r in records
        .iter()
        .filter(|r| r.is_final_test() && filter.keeps(r))
    {
        match groups.iter_mut().find(|g| {
            g.0 == r.protocol
                && same_lr(g.1, r.pretrain_lr)
                && same_lr(g.2, r.subnet_lr)
                && (g.3 - r.sparsity).abs() <= SPARSITY_MATCH
        }) {
            Some(g) => g.4.push(r.accuracy),
            None => groups.push((
                r.protocol,
                r.pretrain_lr,
                r.subnet_lr,
                r.sparsity,
                vec![r.accuracy],
            )),
        }
    }
    if groups.is_empty() {
        return Err(Error::Dependency(format!(
            "empty report: no final test rows match {filter:?}"
        )));
    }
    groups.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.2.total_cmp(&b.2))
            .then(a.1.total_cmp(&b.1))
            .then(a.3.total_cmp(&b.3))
    });
    Ok(groups
        .into_iter()
        .map(|(series, pretrain_lr, subnet_lr, sparsity, accs)| {
            let (mean, std) = mean_std(&accs);
            ReportRow {
                series,
                pretrain_lr,
                subnet_lr,
                sparsity,
                n: accs.len(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect())
}

pub fn emit_report(
    records: &[ResultRecord],
    filter: &ReportFilter,
    format: ReportFormat,
) -> Result<String> {
    let rows = report_rows(records, filter)?;
    match format {
        ReportFormat::Json => {
            Ok(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n")
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| Error::Schema(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv is UTF-8"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::protocol::Method;
    use crate::store::EpochTag;

    fn rec(kind: RunKind, lr: f64, s: f64, rep: u32, acc: f64) -> ResultRecord {
        ResultRecord {
            run_id: format!("{kind}-{lr}-{s}"),
            protocol: kind,
            pretrain_lr: lr,
            subnet_lr: lr,
            sparsity: s,
            seed: 0,
            replicate: rep,
            epoch: EpochTag::Final,
            split: Split::Test,
            accuracy: acc,
            loss: 0.0,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn groups_and_orders_rows() {
        let lt = RunKind::Lt(Method::Imp);
        let recs = vec![
            rec(lt, 0.1, 0.5, 0, 80.0),
            rec(lt, 0.1, 0.5, 1, 82.0),
            rec(lt, 0.01, 0.5, 0, 70.0),
            rec(RunKind::Pretrain, 0.1, 0.0, 0, 90.0),
        ];
        let rows = report_rows(&recs, &ReportFilter::default()).unwrap();
        assert_eq!(rows[0].series, RunKind::Pretrain);
        assert_eq!(rows[1].subnet_lr, 0.01);
        assert_eq!(rows[2].n, 2);
        assert_eq!(rows[2].mean_accuracy, 81.0);
        assert!((rows[2].std_accuracy - 2f64.sqrt()).abs() < 1e-12);
        let csv = emit_report(&recs, &ReportFilter::default(), ReportFormat::Csv).unwrap();
        assert!(
            csv.starts_with("series,pretrain_lr,subnet_lr,sparsity,n,mean_accuracy,std_accuracy\n")
        );
        assert!(csv.contains("lt-imp,0.1,0.1,0.5,2,81.0,"));
    }

    #[test]
    fn empty_selection_is_reported() {
        let recs = vec![rec(RunKind::Pretrain, 0.1, 0.0, 0, 90.0)];
        let f = ReportFilter {
            sparsity: Some(0.9),
            ..Default::default()
        };
        assert!(matches!(report_rows(&recs, &f), Err(Error::Dependency(_))));
    }
}
