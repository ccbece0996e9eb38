//! Datasets, metrics and batch evaluation.

mod dataset;
mod metrics;
mod run;

pub use dataset::{load_dataset, DatasetStats, ErrorType, EvalRecord};
pub use metrics::{
    average_precision, average_reports, compute_metrics, roc_auc, score_from_verdict, Confusion, MetricsReport,
    Prediction, ScoreMode,
};
pub use run::{
    run_evaluation, table_row, write_report, CaseOutcome, EvalOptions, EvalReport, RunSummary, REPORT_SCHEMA_VERSION,
};
