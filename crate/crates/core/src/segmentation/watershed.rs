use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::treetops::TreeTop;
use super::SegmentationError;
use crate::grid::AsciiGrid;

/// Raster of segment ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentRaster(pub AsciiGrid);

impl SegmentRaster {
    pub fn grid(&self) -> &AsciiGrid {
        &self.0
    }

    /// Wraps a grid, checking that every value is a non-negative integer id
    /// (NODATA counts as background).
    pub fn from_grid(mut grid: AsciiGrid) -> Result<Self, SegmentationError> {
        grid.validate()
            .map_err(|e| SegmentationError::InvalidRaster(e.to_string()))?;
        let nodata = grid.nodata_value;
        for v in &mut grid.values {
            if *v == nodata || v.is_nan() {
                *v = 0.0;
            } else if *v < 0.0 || v.fract() != 0.0 || *v > u32::MAX as f64 {
                return Err(SegmentationError::InvalidRaster(format!(
                    "segment id {v} is not a non-negative integer"
                )));
            }
        }
        grid.nodata_value = 0.0;
        Ok(Self(grid))
    }

    pub fn id_at_index(&self, i: usize) -> u32 {
        self.0.values[i] as u32
    }

    pub fn id_at(&self, row: usize, col: usize) -> u32 {
        self.0.get(row, col) as u32
    }

    /// Segment id under `(x, y)`: `None` outside the raster, `Some(0)` on
    /// background.
    pub fn lookup(&self, x: f64, y: f64) -> Option<u32> {
        let (r, c) = self.0.geometry().cell_of(x, y)?;
        Some(self.id_at(r, c))
    }

    /// Pixel count per id, indexed by id (entry 0 = background).
    pub fn pixel_counts(&self) -> Vec<usize> {
        let max = self.0.values.iter().fold(0u32, |m, &v| m.max(v as u32));
        let mut counts = vec![0usize; max as usize + 1];
        for &v in &self.0.values {
            counts[v as usize] += 1;
        }
        counts
    }

    /// Sorted distinct non-background ids.
    pub fn ids(&self) -> Vec<u32> {
        self.pixel_counts()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &n)| n > 0)
            .map(|(id, _)| id as u32)
            .collect()
    }
}

#[derive(Debug, PartialEq)]
struct Entry {
    height: f64,
    label: u32,
    seq: u64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Max-heap: higher canopy first, then lower label, then earlier push.
    fn cmp(&self, other: &Self) -> Ordering {
        self.height
            .total_cmp(&other.height)
            .then_with(|| other.label.cmp(&self.label))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Marker-controlled watershed on the smoothed canopy (priority flood of the
/// inverted surface, 4-connected). Tree top `i` seeds segment `i + 1`.
/// Cells below `min_height` or NODATA are background. A cell joins the
/// segment of the first neighbor popped next to it; the queue pops the
/// highest canopy first, ties to the lower segment id.
pub fn watershed_delineate(
    smoothed: &AsciiGrid,
    treetops: &[TreeTop],
    min_height: f64,
) -> Result<SegmentRaster, SegmentationError> {
    if treetops.is_empty() {
        return Err(SegmentationError::NoMarkers);
    }
    let (nrows, ncols) = (smoothed.nrows, smoothed.ncols);
    let eligible = |i: usize| {
        let v = smoothed.values[i];
        !smoothed.is_nodata(v) && v >= min_height
    };
    let mut labels = vec![0u32; smoothed.values.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (k, top) in treetops.iter().enumerate() {
        if top.row >= nrows || top.col >= ncols {
            return Err(SegmentationError::InvalidRaster(format!(
                "tree top {k} at ({}, {}) outside {nrows}x{ncols} raster",
                top.row, top.col
            )));
        }
        let i = top.row * ncols + top.col;
        if labels[i] != 0 {
            continue;
        }
        labels[i] = k as u32 + 1;
        heap.push(Entry {
            height: smoothed.values[i],
            label: labels[i],
            seq,
            index: i,
        });
        seq += 1;
    }
    while let Some(Entry { label, index, .. }) = heap.pop() {
        let (r, c) = (index / ncols, index % ncols);
        let mut neighbors = [None; 4];
        if r > 0 {
            neighbors[0] = Some(index - ncols);
        }
        if c > 0 {
            neighbors[1] = Some(index - 1);
        }
        if c + 1 < ncols {
            neighbors[2] = Some(index + 1);
        }
        if r + 1 < nrows {
            neighbors[3] = Some(index + ncols);
        }
        for j in neighbors.into_iter().flatten() {
            if labels[j] == 0 && eligible(j) {
                labels[j] = label;
                heap.push(Entry {
                    height: smoothed.values[j],
                    label,
                    seq,
                    index: j,
                });
                seq += 1;
            }
        }
    }
    let grid = AsciiGrid {
        ncols,
        nrows,
        xllcorner: smoothed.xllcorner,
        yllcorner: smoothed.yllcorner,
        cellsize: smoothed.cellsize,
        nodata_value: 0.0,
        values: labels.into_iter().map(f64::from).collect(),
    };
    Ok(SegmentRaster(grid))
}
