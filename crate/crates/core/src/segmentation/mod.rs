//! Canopy height model, tree-top detection, marker-controlled watershed and
//! raster polygonization.

mod boundary;
mod chm;
mod extract;
mod pipeline;
mod treetops;
mod watershed;

pub use boundary::{boundaries_to_geojson, trace_boundaries, Polygon};
pub use chm::{build_chm, Chm, DEFAULT_CHM_CELLSIZE, DEFAULT_CHM_CHANNELS};
pub use extract::{extract_segments, Extraction};
pub use pipeline::{normalize_plot, segment_plot, SegmentParams, SegmentationRun};
pub use treetops::{detect_treetops, detect_treetops_on, smooth_chm, window_for_height, TreeTop};
pub use watershed::{watershed_delineate, SegmentRaster};

use thiserror::Error;

/// Minimum height of a tree top and of any crown pixel (m).
pub const DEFAULT_MIN_TREE_HEIGHT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no qualifying vegetation points for the canopy height model")]
    NoVegetationPoints,
    #[error("watershed needs at least one marker")]
    NoMarkers,
    #[error("no ground points to build a terrain model from")]
    NoGroundPoints,
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
}
