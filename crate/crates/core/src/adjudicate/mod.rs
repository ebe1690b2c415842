//! Ticket conditions, verdicts, and the magnitude-correlation indicator.

mod correlation;
mod from_log;
mod verdict;

pub use correlation::{
    correlation_indicator, Correlation, CorrelationReport, LayerOverlap, WEAK_BAND,
};
pub use from_log::{adjudicate_run, build_table, Adjudication, TableQuery, TicketSource};
pub use verdict::{
    check_conditions, classify, classify_flags, similar, AccuracyTable, ConditionReport,
    ConditionResult, DatasetClass, LrRow, Outcome, QuantifierMode, Stat, TicketClass,
    VerdictThresholds,
};
