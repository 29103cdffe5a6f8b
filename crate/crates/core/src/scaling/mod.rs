//! Cross-validation folds, training-size and density sweeps, and power-law
//! fits of classification error.

mod folds;
mod powerlaw;
mod sweep;

pub use folds::{nested_subsample, stratified_holdout, stratified_kfold, FoldAssignment};
pub use powerlaw::{extrapolate_m, fit_power_law, fit_sweep, ErrorKind, PowerLawFit};
pub use sweep::{
    cross_validate, sweep_density, sweep_training_size, FnTrainer, SweepPoint, SweepResult,
    Trainer,
};

use thiserror::Error;

use crate::model::Species;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("class {species} has {count} samples, fewer than k = {k}")]
    ClassSmallerThanK { species: Species, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("power-law fit needs positive x and error values; got ({x}, {y})")]
    NonPositiveInput { x: f64, y: f64 },
    #[error("power-law fit needs at least 2 points with distinct x, got {0}")]
    TooFewPoints(usize),
    #[error("exponent {0} is not positive; the error does not decrease")]
    NonConvergentFit(f64),
    #[error("target error {0} outside (0, 1)")]
    InvalidTarget(f64),
    #[error("sweep values must be positive: {0}")]
    InvalidSweep(String),
    #[error("trainer failed at x = {x}, fold {fold}: {msg}")]
    Trainer { x: f64, fold: usize, msg: String },
    #[error("sweep output: {0}")]
    Output(String),
}
