use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack absorbing float noise in accuracies quoted to one decimal.
const EPS: f64 = 1e-9;

/// Benchmark scale, which sets the default similarity threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetClass {
    /// Around 10 classes.
    Small,
    /// Around 100 or 200 classes.
    Medium,
    /// Around 1000 classes.
    Large,
}

impl DatasetClass {
    pub fn from_num_classes(c: usize) -> Self {
        match c {
            0..=50 => DatasetClass::Small,
            51..=500 => DatasetClass::Medium,
            _ => DatasetClass::Large,
        }
    }
}

/// Thresholds in accuracy points, and the minimum sparsity of a valid ticket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictThresholds {
    pub delta_similar: f64,
    pub delta_gap: f64,
    pub s_min: f64,
}

impl VerdictThresholds {
    pub fn for_class(c: DatasetClass) -> Self {
        let delta_similar = match c {
            DatasetClass::Small => 0.5,
            DatasetClass::Medium => 1.0,
            DatasetClass::Large => 1.5,
        };
        VerdictThresholds {
            delta_similar,
            delta_gap: 0.5,
            s_min: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("delta_similar", self.delta_similar),
            ("delta_gap", self.delta_gap),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{n} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.s_min) {
            return Err(Error::config(format!(
                "s_min must lie in [0, 1), got {}",
                self.s_min
            )));
        }
        Ok(())
    }
}

/// `a` is similar to `b`: no more than `delta` below it.
pub fn similar(a: f64, b: f64, delta: f64) -> bool {
    a >= b - delta - EPS
}

/// `a` beats `b` by at least `gap`.
fn beats(a: f64, b: f64, gap: f64) -> bool {
    a >= b + gap - EPS
}

/// Mean and spread of one protocol's final accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn point(mean: f64) -> Self {
        Stat {
            mean,
            std: 0.0,
            n: 1,
        }
    }
}

/// Accuracies at one retraining learning rate. `None` means not evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRow {
    pub lr: f64,
    pub pretrain: Option<Stat>,
    pub lt: Option<Stat>,
    pub rr: Option<Stat>,
    pub sdt: Option<Stat>,
}

/// Everything needed to judge one candidate ticket family at one sparsity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub sparsity: f64,
    /// Whether pretraining ran the full recipe length.
    pub trained_full: bool,
    pub rows: Vec<LrRow>,
}

impl AccuracyTable {
    /// Convenience constructor from parallel per-lr columns of means.
    pub fn from_columns(
        sparsity: f64,
        lrs: &[f64],
        pretrain: &[Option<f64>],
        lt: &[Option<f64>],
        rr: &[Option<f64>],
        sdt: &[Option<f64>],
    ) -> Result<Self> {
        let n = lrs.len();
        if [pretrain.len(), lt.len(), rr.len(), sdt.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::arg("accuracy columns differ in length"));
        }
        Ok(AccuracyTable {
            sparsity,
            trained_full: true,
            rows: (0..n)
                .map(|i| LrRow {
                    lr: lrs[i],
                    pretrain: pretrain[i].map(Stat::point),
                    lt: lt[i].map(Stat::point),
                    rr: rr[i].map(Stat::point),
                    sdt: sdt[i].map(Stat::point),
                })
                .collect(),
        })
    }

    fn best<F: Fn(&LrRow) -> Option<Stat>>(&self, f: F) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for r in &self.rows {
            if let Some(s) = f(r) {
                if best.is_none_or(|(_, b)| s.mean > b) {
                    best = Some((r.lr, s.mean));
                }
            }
        }
        best
    }

    /// Learning rate and accuracy of the best ticket; ties go to the first row.
    pub fn best_lt(&self) -> Option<(f64, f64)> {
        self.best(|r| r.lt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantifierMode {
    /// Each condition may be met at its own learning rate.
    Independent,
    /// One learning rate must carry the RR gap and the pretrain match together.
    SingleWitness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    /// Required rows were missing; counts as failing.
    NotEvaluated,
}

impl Outcome {
    pub fn passed(self) -> bool {
        self == Outcome::Pass
    }

    fn of(b: bool) -> Self {
        if b {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub outcome: Outcome,
    /// Learning rate that satisfied the condition, when one is needed.
    pub witness_lr: Option<f64>,
    pub detail: String,
}

impl ConditionResult {
    fn new(outcome: Outcome, witness_lr: Option<f64>, detail: String) -> Self {
        ConditionResult {
            outcome,
            witness_lr,
            detail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketClass {
    /// All five conditions hold.
    Jackpot,
    /// Conditions 1 through 4 hold, 5 does not.
    Secondary,
    None,
}

/// The five conditions, in order: sparsity and full training, beats a small dense
/// network, beats random reinitialization, matches pretraining at the same lr,
/// matches the best pretraining over all lrs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub conditions: [ConditionResult; 5],
    pub mode: QuantifierMode,
    pub thresholds: VerdictThresholds,
    /// Ticket accuracy that the small-dense comparison was anchored to.
    pub anchor_lt: Option<f64>,
}

impl ConditionReport {
    pub fn flags(&self) -> [bool; 5] {
        std::array::from_fn(|i| self.conditions[i].outcome.passed())
    }
}

/// Maps condition flags to a ticket class.
pub fn classify_flags(f: [bool; 5]) -> TicketClass {
    match f {
        [true, true, true, true, true] => TicketClass::Jackpot,
        [true, true, true, true, false] => TicketClass::Secondary,
        _ => TicketClass::None,
    }
}

pub fn classify(report: &ConditionReport) -> TicketClass {
    classify_flags(report.flags())
}

/// Row with the best ticket among `lrs`, first on ties.
fn best_among(table: &AccuracyTable, lrs: &[f64]) -> Option<(f64, f64)> {
    table.best(|r| if lrs.contains(&r.lr) { r.lt } else { None })
}

pub fn check_conditions(
    table: &AccuracyTable,
    th: &VerdictThresholds,
    mode: QuantifierMode,
) -> Result<ConditionReport> {
    th.validate()?;
    let s = table.sparsity;
    let c1 = ConditionResult::new(
        Outcome::of(s >= th.s_min - EPS && table.trained_full),
        None,
        format!(
            "sparsity {s:.4} vs minimum {:.2}; full-length pretraining {}",
            th.s_min,
            if table.trained_full { "yes" } else { "no" }
        ),
    );

    let max_rr = table.best(|r| r.rr);
    let max_pre = table.best(|r| r.pretrain);
    let max_sdt = table.best(|r| r.sdt);

    // per-lr witnesses of the RR gap, the same-lr pretrain match, and the best-pretrain match
    let w3: Vec<f64> = match max_rr {
        Some((_, rr)) => table
            .rows
            .iter()
            .filter(|r| r.lt.is_some_and(|lt| beats(lt.mean, rr, th.delta_gap)))
            .map(|r| r.lr)
            .collect(),
        None => Vec::new(),
    };
    let w4: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| matches!((r.lt, r.pretrain), (Some(lt), Some(p)) if similar(lt.mean, p.mean, th.delta_similar)))
        .map(|r| r.lr)
        .collect();
    let has4 = table
        .rows
        .iter()
        .any(|r| r.lt.is_some() && r.pretrain.is_some());
    let w5: Vec<f64> = match max_pre {
        Some((_, p)) => table
            .rows
            .iter()
            .filter(|r| r.lt.is_some_and(|lt| similar(lt.mean, p, th.delta_similar)))
            .map(|r| r.lr)
            .collect(),
        None => Vec::new(),
    };

    let (c3, c4, c5, anchor_set) = match mode {
        QuantifierMode::Independent => {
            let c3 = match max_rr {
                None => ConditionResult::new(
                    Outcome::NotEvaluated,
                    None,
                    "no random-reinit rows".into(),
                ),
                Some((rr_lr, rr)) => ConditionResult::new(
                    Outcome::of(!w3.is_empty()),
                    best_among(table, &w3).map(|b| b.0),
                    format!(
                        "best random reinit {rr:.2} at lr {rr_lr}; ticket must reach {:.2}",
                        rr + th.delta_gap
                    ),
                ),
            };
            let c4 = if has4 {
                ConditionResult::new(
                    Outcome::of(!w4.is_empty()),
                    best_among(table, &w4).map(|b| b.0),
                    format!(
                        "ticket within {} of pretraining at the same lr",
                        th.delta_similar
                    ),
                )
            } else {
                ConditionResult::new(
                    Outcome::NotEvaluated,
                    None,
                    "no lr with both ticket and pretraining rows".into(),
                )
            };
            let c5 = match max_pre {
                None => {
                    ConditionResult::new(Outcome::NotEvaluated, None, "no pretraining rows".into())
                }
                Some((p_lr, p)) => ConditionResult::new(
                    Outcome::of(!w5.is_empty()),
                    best_among(table, &w5).map(|b| b.0),
                    format!(
                        "best pretraining {p:.2} at lr {p_lr}; ticket must reach {:.2}",
                        p - th.delta_similar
                    ),
                ),
            };
            (c3, c4, c5, w3.clone())
        }
        QuantifierMode::SingleWitness => {
            let joint: Vec<f64> = w3.iter().copied().filter(|lr| w4.contains(lr)).collect();
            let joint5: Vec<f64> = joint.iter().copied().filter(|lr| w5.contains(lr)).collect();
            let wit = best_among(table, &joint).map(|b| b.0);
            let detail = format!(
                "one lr must beat random reinit by {} and match same-lr pretraining within {}",
                th.delta_gap, th.delta_similar
            );
            let c3 = if max_rr.is_none() {
                ConditionResult::new(Outcome::NotEvaluated, None, "no random-reinit rows".into())
            } else {
                ConditionResult::new(Outcome::of(!joint.is_empty()), wit, detail.clone())
            };
            let c4 = if !has4 {
                ConditionResult::new(
                    Outcome::NotEvaluated,
                    None,
                    "no lr with both ticket and pretraining rows".into(),
                )
            } else {
                ConditionResult::new(Outcome::of(!joint.is_empty()), wit, detail)
            };
            let c5 = match max_pre {
                None => {
                    ConditionResult::new(Outcome::NotEvaluated, None, "no pretraining rows".into())
                }
                Some((_, p)) => ConditionResult::new(
                    Outcome::of(!joint5.is_empty()),
                    best_among(table, &joint5).map(|b| b.0),
                    format!("the same lr must also reach {:.2}", p - th.delta_similar),
                ),
            };
            (c3, c4, c5, joint)
        }
    };

    let anchor = best_among(table, &anchor_set)
        .or_else(|| table.best_lt())
        .map(|b| b.1);
    let c2 = match (max_sdt, anchor) {
        (None, _) => {
            ConditionResult::new(Outcome::NotEvaluated, None, "no small-dense rows".into())
        }
        (_, None) => ConditionResult::new(Outcome::NotEvaluated, None, "no ticket rows".into()),
        (Some((sdt_lr, sdt)), Some(l)) => ConditionResult::new(
            Outcome::of(beats(l, sdt, th.delta_gap)),
            None,
            format!("best small-dense {sdt:.2} at lr {sdt_lr}; ticket anchor {l:.2}"),
        ),
    };

    Ok(ConditionReport {
        conditions: [c1, c2, c3, c4, c5],
        mode,
        thresholds: *th,
        anchor_lt: anchor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_table() {
        assert_eq!(classify_flags([true; 5]), TicketClass::Jackpot);
        assert_eq!(
            classify_flags([true, true, true, true, false]),
            TicketClass::Secondary
        );
        for i in 0..4 {
            let mut f = [true; 5];
            f[i] = false;
            assert_eq!(classify_flags(f), TicketClass::None);
        }
    }

    #[test]
    fn similarity_boundary_is_inclusive() {
        assert!(similar(91.5, 92.0, 0.5));
        assert!(!similar(91.49, 92.0, 0.5));
    }

    #[test]
    fn missing_rows_are_not_evaluated() {
        let t = AccuracyTable::from_columns(
            0.9,
            &[0.1],
            &[Some(92.0)],
            &[Some(91.9)],
            &[None],
            &[None],
        )
        .unwrap();
        let r = check_conditions(
            &t,
            &VerdictThresholds::for_class(DatasetClass::Small),
            QuantifierMode::Independent,
        )
        .unwrap();
        assert_eq!(r.conditions[1].outcome, Outcome::NotEvaluated);
        assert_eq!(r.conditions[2].outcome, Outcome::NotEvaluated);
        assert_eq!(classify(&r), TicketClass::None);
    }

    #[test]
    fn default_thresholds() {
        assert_eq!(
            VerdictThresholds::for_class(DatasetClass::from_num_classes(100)).delta_similar,
            1.0
        );
        assert_eq!(
            VerdictThresholds::for_class(DatasetClass::from_num_classes(1000)).delta_similar,
            1.5
        );
        assert_eq!(DatasetClass::from_num_classes(200), DatasetClass::Medium);
    }
}
