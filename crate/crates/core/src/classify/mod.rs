//! Random-forest species classifier.

mod forest;
mod trainer;
mod tree;

pub use forest::{
    jitter_oversample, oob_error, predict, read_predictions, train_forest, write_predictions,
    ForestModel, ForestParams, ImbalanceMode, OobEstimate, Prediction, MODEL_VERSION,
};
pub use trainer::SegmentForestTrainer;
pub use tree::{DecisionTree, Node};

use thiserror::Error;

use crate::model::Species;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("class {species} has {count} samples; at least 2 are needed to estimate its spread")]
    ClassTooSmall { species: Species, count: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("predictions file: {0}")]
    Predictions(String),
}
