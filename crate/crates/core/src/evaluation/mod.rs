//! Accuracy metrics, posterior summaries and study reports.

pub mod cluster;
pub mod metrics;
pub mod report;
pub mod summary;

pub use cluster::{coclustering_matrix, dendrogram, least_squares_partition, percent_zero, select_nonzero, Merge};
pub use metrics::{adjusted_rand_index, pointwise_mse, rand_index};
pub use report::{aggregate_study, bootstrap_se, evaluate_chain, CellSummary, Estimate, EvaluationReport};
pub use summary::{curve_summary, quantile_sorted, CurveSummary};
