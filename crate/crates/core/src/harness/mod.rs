//! Dataset ingestion, judging, metrics, trace persistence and the command line.

pub mod cli;
pub mod cost;
pub mod dataset;
pub mod judge;
pub mod metrics;
pub mod persist;

pub use cli::{cli_run, Cli, RunReport};
pub use cost::{CallRecord, CostLedger, CostTotals, ToolCallRecord};
pub use dataset::{load_dataset, load_dataset_with, FieldMap, TaskRecord};
pub use judge::{exact_match, judge_answer, normalize_answer, JudgeKind, JudgeVerdict};
pub use metrics::{aggregate_metrics, DatasetAccuracy, MetricsReport};
pub use persist::{persist_trace, read_trace};
