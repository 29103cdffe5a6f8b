//! Dataset I/O and point-cloud preprocessing.

mod depth;
mod dtm;
mod fusion;
mod ground;
mod io;
mod thin;

pub use depth::{render_depth_views, write_depth_views, DepthImage, DEPTH_VIEW_COUNT};
pub use dtm::{build_dtm, build_dtm_on, normalize_heights, Dtm, DTM_NODATA};
pub use fusion::{fuse_channels, DEFAULT_FUSION_RADIUS};
pub use ground::{
    classify_ground_and_noise, classify_ground_and_noise_with, GroundParams, GroundPartition,
};
pub use io::{
    parse_labels, parse_points, read_labels, read_points, write_fused_points, write_labels,
    write_points, LABELS_HEADER, POINTS_HEADER,
};
pub use thin::{subsample_to_density, voxel_thin, voxel_thin_indices};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("line {line}: invariant violation: {msg}")]
    InvariantViolation { line: u64, msg: String },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    BadHeader { found: String, expected: String },
    #[error("no ground points to build a terrain model from")]
    NoGroundPoints,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("png encoding failed: {0}")]
    Png(String),
}

impl IngestError {
    /// 1-based line of a row-level error.
    pub fn line(&self) -> Option<u64> {
        match self {
            IngestError::MalformedRow { line, .. } | IngestError::InvariantViolation { line, .. } => {
                Some(*line)
            }
            _ => None,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}
