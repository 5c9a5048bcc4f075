//! Trial analytics: stage segmentation, completion statistics, effect sizes
//! and report tables.

mod log;
mod report;
mod segment;
mod stats;

pub use log::{EffectorSnapshot, Event, EventKind, LogHeader, Platform, Sample, TrialLog, LOG_FORMAT_VERSION};
pub use report::{build_report, MetricsReport, PlatformSummary, TaskReport};
pub use segment::{segment_stages, segment_stages_with, SegmentParams, Stage, StageAnnotation, StageInterval};
pub use stats::{completion_stats, percent_reduction, smd, CompletionStats, DispersionMode};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no data to summarize")]
    Empty,
    #[error("both platforms have zero dispersion")]
    DegenerateDispersion,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("parse error: {0}")]
    Parse(String),
}
