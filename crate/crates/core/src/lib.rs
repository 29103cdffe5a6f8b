//! Multispectral airborne laser scanning (ALS) toolkit for tree-species
//! classification.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`ingest`]: canonical CSV / ASCII-grid I/O, ground and noise filtering,
//!   terrain models, height normalization, channel fusion, voxel thinning,
//!   density subsampling and depth-view rendering.
//! * [`segmentation`]: canopy height model, variable-window tree-top
//!   detection, marker-controlled watershed and boundary tracing.
//! * [`features`]: a fixed 61-column feature schema with leakage-free
//!   normalization and median imputation.
//! * [`classify`]: a random forest (CART / Gini) with balanced bootstrap,
//!   Gaussian-jitter oversampling and out-of-bag error.
//! * [`evaluate`]: confusion matrices, accuracy metrics, bootstrap confidence
//!   intervals, per-category breakdowns and crown classes.
//! * [`scaling`]: stratified folds, nested subsampling, training-size and
//!   point-density sweeps and power-law fitting.
//! * [`synth`]: a synthetic multispectral forest generator with exact truth.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Every randomized routine takes an explicit [`RngSeed`]; outputs do not
//! depend on the number of worker threads.

pub mod classify;
pub mod evaluate;
pub mod exec;
pub mod features;
pub mod grid;
pub mod ingest;
pub mod kdtree;
pub mod model;
pub mod plot;
pub mod scaling;
pub mod segmentation;
pub mod stats;
pub mod synth;

pub use grid::AsciiGrid;
pub use model::{
    CrownClass, FusedPoint, LabeledSegment, PointRecord, ProfileCategory, RngSeed, SegmentCloud,
    Species, Split,
};
