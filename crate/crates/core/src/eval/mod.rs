//! Benchmark evaluation: query sets, ground truth, top-k metrics and the
//! experiment runners (top-k benchmark and unbounded tail analysis).

mod benchmark;
mod metrics;
mod runner;

pub use benchmark::{
    validate_benchmark, BenchmarkQuery, Category, GroundTruth, GroundTruthEntry, ValidationIssue,
    ValidationReport, STANDARD_CATEGORY_COUNTS,
};
pub use metrics::{average_precision, f1, f1_at_k, precision_at_k, recall_at_k, reciprocal_rank, QueryMetrics};
pub use runner::{
    run_benchmark, unbounded_analysis, Aggregate, QueryEmbedder, QueryOutcome, QueryTail, MetricsReport,
    ReportMetadata, RunOptions, TailCandidate, TailReport,
};
