//! Snapshot and mask files, the results log, and report tables.

mod codec;
mod mask_file;
mod report;
mod results;
mod snapshot_file;

pub use mask_file::{decode_mask, encode_mask, read_mask, write_mask, MASK_MAGIC};
pub(crate) use report::same_lr;
pub use report::{
    emit_report, mean_std, report_rows, ReportFilter, ReportFormat, ReportRow, SPARSITY_MATCH,
};
pub use results::{parse_log, read_results, EpochTag, LogLine, ResultRecord, ResultsLog};
pub use snapshot_file::{
    decode_snapshot, encode_snapshot, read_snapshot, read_snapshot_for, write_snapshot,
    SNAPSHOT_MAGIC,
};
