//! Benchmark harness: datasets, references, method runs, metrics, reports.

pub mod bootstrap;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod reference;
pub mod report;
pub mod runner;
pub mod synth;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_cis, quantile_type7, ConfidenceInterval};
pub use config::{BenchConfig, LoadedConfig, Method};
pub use dataset::{load_dataset, read_dataset, write_dataset, DatasetError, DatasetRow};
pub use metrics::{
    confusion, fmt2, metrics, round_half_up, ConfusionCounts, JoinError, MetricId, MetricsReport,
};
pub use reference::{
    build_expert_subset, build_lay_consensus, build_reference, Reference, ReferenceKind,
};
pub use report::render_report;
pub use runner::{
    run_benchmark, run_from_config, BenchOutput, Manifest, PredictionRecord, RunResult, Summary,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("replay cache miss in {method}/{model} case {case_id}: {key}")]
    CacheMiss {
        method: Method,
        model: String,
        case_id: String,
        key: String,
    },
    #[error("{method}/{model} case {case_id} failed: {message}")]
    CaseFailed {
        method: Method,
        model: String,
        case_id: String,
        message: String,
    },
    #[error(transparent)]
    Join(#[from] JoinError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
