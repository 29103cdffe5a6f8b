use serde::{Deserialize, Serialize};

use super::{
    build_chm, detect_treetops_on, extract_segments, smooth_chm, watershed_delineate, Chm,
    Extraction, SegmentRaster, SegmentationError, TreeTop, DEFAULT_CHM_CELLSIZE,
    DEFAULT_CHM_CHANNELS, DEFAULT_MIN_TREE_HEIGHT,
};
use crate::grid::{AsciiGrid, GridGeometry};
use crate::ingest::{
    build_dtm_on, classify_ground_and_noise_with, fuse_channels, normalize_heights, Dtm,
    GroundParams, GroundPartition, DEFAULT_FUSION_RADIUS,
};
use crate::model::PointRecord;

/// Settings of [`segment_plot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    pub chm_cellsize: f64,
    pub chm_channels: Vec<u8>,
    pub dtm_cellsize: f64,
    pub min_height: f64,
    pub fusion_radius: f64,
    pub noise_radius: f64,
    pub noise_min_neighbors: usize,
    pub ground_cell: f64,
    pub ground_tolerance: f64,
    /// Fixed CHM raster extent; `None` covers the vegetation first returns.
    pub extent: Option<GridGeometry>,
}

impl Default for SegmentParams {
    fn default() -> Self {
        let g = GroundParams::default();
        Self {
            chm_cellsize: DEFAULT_CHM_CELLSIZE,
            chm_channels: DEFAULT_CHM_CHANNELS.to_vec(),
            dtm_cellsize: 1.0,
            min_height: DEFAULT_MIN_TREE_HEIGHT,
            fusion_radius: DEFAULT_FUSION_RADIUS,
            noise_radius: g.noise_radius,
            noise_min_neighbors: g.min_neighbors,
            ground_cell: g.cell_size,
            ground_tolerance: g.ground_tolerance,
            extent: None,
        }
    }
}

/// Every intermediate product of one plot segmentation.
#[derive(Debug, Clone)]
pub struct SegmentationRun {
    pub partition: GroundPartition,
    pub dtm: Dtm,
    /// Vegetation points with normalized heights, in partition order.
    pub vegetation: Vec<PointRecord>,
    pub chm: Chm,
    pub smoothed: AsciiGrid,
    pub treetops: Vec<TreeTop>,
    pub raster: SegmentRaster,
    pub extraction: Extraction,
}

/// Terrain-normalized vegetation of a plot: ground/noise split, DTM over the
/// non-noise extent, then heights above ground for the vegetation points.
pub fn normalize_plot(
    points: &[PointRecord],
    params: &SegmentParams,
) -> Result<(GroundPartition, Dtm, Vec<PointRecord>), SegmentationError> {
    let partition = classify_ground_and_noise_with(
        points,
        &GroundParams {
            noise_radius: params.noise_radius,
            min_neighbors: params.noise_min_neighbors,
            cell_size: params.ground_cell,
            ground_tolerance: params.ground_tolerance,
        },
    );
    let ground: Vec<PointRecord> = partition.ground.iter().map(|&i| points[i]).collect();
    let kept = partition
        .ground
        .iter()
        .chain(&partition.vegetation)
        .map(|&i| (points[i].x, points[i].y));
    let dtm_geo = GridGeometry::covering(kept, params.dtm_cellsize)
        .ok_or(SegmentationError::NoGroundPoints)?;
    let dtm = build_dtm_on(&ground, dtm_geo).map_err(|_| SegmentationError::NoGroundPoints)?;
    let raw: Vec<PointRecord> = partition.vegetation.iter().map(|&i| points[i]).collect();
    let vegetation = normalize_heights(&raw, &dtm);
    Ok((partition, dtm, vegetation))
}

/// Ground/noise split, DTM, normalization, CHM, tree tops, watershed, channel
/// fusion of the vegetation points and segment extraction.
pub fn segment_plot(
    points: &[PointRecord],
    params: &SegmentParams,
) -> Result<SegmentationRun, SegmentationError> {
    let (partition, dtm, vegetation) = normalize_plot(points, params)?;
    let chm = build_chm(
        &vegetation,
        params.chm_cellsize,
        &params.chm_channels,
        params.extent,
    )?;
    let smoothed = smooth_chm(&chm);
    let treetops = detect_treetops_on(&chm, &smoothed, params.min_height);
    let raster = watershed_delineate(&smoothed, &treetops, params.min_height)?;
    let fused = fuse_channels(&vegetation, params.fusion_radius);
    let extraction = extract_segments(&fused, &raster);
    Ok(SegmentationRun {
        partition,
        dtm,
        vegetation,
        chm,
        smoothed,
        treetops,
        raster,
        extraction,
    })
}
