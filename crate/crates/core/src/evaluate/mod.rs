//! Accuracy metrics, bootstrap intervals and per-category breakdowns.

mod bootstrap;
mod breakdown;
mod crown;
mod metrics;

pub use bootstrap::{bootstrap_ci, BootstrapCi, DEFAULT_BOOTSTRAP_REPLICATES};
pub use breakdown::{breakdown, BreakdownBy, BreakdownEntry};
pub use crown::{assign_crown_classes, CrownInput, CrownRules};
pub use metrics::{confusion, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluateError {
    #[error("references and predictions differ in length ({refs} vs {preds})")]
    LengthMismatch { refs: usize, preds: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("bootstrap needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("report output: {0}")]
    Output(String),
}
