//! Metrics and the k-fold experiment harness.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    run_experiment, run_experiment_on, ExperimentData, ExperimentReport, ExperimentSample, FoldMetrics, FoldReport,
    ModelSpec,
};
pub use metrics::{accuracy, average_ranks, spearman, Aggregate, Spearman};
