use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::grid::{AsciiGrid, GridGeometry};
use crate::kdtree::KdTree;
use crate::model::{HasPosition, PointRecord};

pub const DTM_NODATA: f64 = -9999.0;

/// Ground elevation raster. Every cell holds a finite elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dtm(pub AsciiGrid);

impl Dtm {
    pub fn grid(&self) -> &AsciiGrid {
        &self.0
    }

    /// Elevation under `(x, y)`; points outside the raster use the nearest
    /// edge cell.
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        let (r, c) = self.0.geometry().cell_of_clamped(x, y);
        self.0.get(r, c)
    }
}

/// Terrain model over the extent of the ground points.
pub fn build_dtm<P: HasPosition>(ground: &[P], cellsize: f64) -> Result<Dtm, IngestError> {
    let geometry = GridGeometry::covering(
        ground.iter().map(|p| {
            let q = p.position();
            (q[0], q[1])
        }),
        cellsize,
    )
    .ok_or(IngestError::NoGroundPoints)?;
    build_dtm_on(ground, geometry)
}

/// Terrain model on a caller-chosen extent: cell value = lowest ground
/// point in the cell, empty cells copy the nearest filled cell (by cell
/// center distance, ties to the lower row-major index).
pub fn build_dtm_on<P: HasPosition>(
    ground: &[P],
    geometry: GridGeometry,
) -> Result<Dtm, IngestError> {
    let mut grid = AsciiGrid::filled(geometry, f64::INFINITY, DTM_NODATA);
    let mut any = false;
    for p in ground {
        let q = p.position();
        if let Some((r, c)) = geometry.cell_of(q[0], q[1]) {
            let i = geometry.index(r, c);
            grid.values[i] = grid.values[i].min(q[2]);
            any = true;
        }
    }
    if !any {
        return Err(IngestError::NoGroundPoints);
    }

    let filled: Vec<usize> = (0..grid.values.len())
        .filter(|&i| grid.values[i].is_finite())
        .collect();
    if filled.len() < grid.values.len() {
        let centers: Vec<[f64; 3]> = filled
            .iter()
            .map(|&i| {
                let (x, y) = geometry.cell_center(i / geometry.ncols, i % geometry.ncols);
                [x, y, 0.0]
            })
            .collect();
        let tree = KdTree::build(centers);
        for i in 0..grid.values.len() {
            if grid.values[i].is_finite() {
                continue;
            }
            let (x, y) = geometry.cell_center(i / geometry.ncols, i % geometry.ncols);
            let (k, _) = tree.nearest(&[x, y, 0.0]).expect("non-empty");
            grid.values[i] = grid.values[filled[k]];
        }
    }
    Ok(Dtm(grid))
}

/// Replaces every z by its height above the terrain model.
pub fn normalize_heights(points: &[PointRecord], dtm: &Dtm) -> Vec<PointRecord> {
    points
        .iter()
        .map(|p| PointRecord {
            z: p.z - dtm.elevation(p.x, p.y),
            ..*p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(x: f64, y: f64, z: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            channel: 1,
            reflectance: 0.0,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        }
    }

    #[test]
    fn single_point_fills_everything() {
        let geo = GridGeometry {
            ncols: 5,
            nrows: 4,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 1.0,
        };
        let dtm = build_dtm_on(&[gp(2.5, 1.5, 10.0)], geo).unwrap();
        assert!(dtm.grid().values.iter().all(|&v| v == 10.0));
    }

    #[test]
    fn min_rule_within_cell() {
        let dtm = build_dtm(&[gp(0.2, 0.2, 1.0), gp(0.7, 0.6, 5.0)], 1.0).unwrap();
        assert_eq!(dtm.grid().values, vec![1.0]);
    }

    #[test]
    fn no_ground_points() {
        let empty: Vec<PointRecord> = Vec::new();
        assert!(matches!(build_dtm(&empty, 1.0), Err(IngestError::NoGroundPoints)));
    }

    #[test]
    fn tilted_plane_within_slope_error() {
        let mut pts = Vec::new();
        for i in 0..200 {
            for j in 0..100 {
                let x = i as f64 * 0.1 + 0.05;
                let y = j as f64 * 0.1 + 0.05;
                pts.push(gp(x, y, 0.1 * x));
            }
        }
        let dtm = build_dtm(&pts, 1.0).unwrap();
        let geo = dtm.grid().geometry();
        for r in 0..geo.nrows {
            for c in 0..geo.ncols {
                let (x, _) = geo.cell_center(r, c);
                assert!((dtm.grid().get(r, c) - 0.1 * x).abs() <= 0.1);
            }
        }
    }

    #[test]
    fn gap_fill_uses_nearest_cell() {
        let geo = GridGeometry {
            ncols: 5,
            nrows: 1,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 1.0,
        };
        let dtm = build_dtm_on(&[gp(0.5, 0.5, 1.0), gp(4.5, 0.5, 3.0)], geo).unwrap();
        // Middle cell is equidistant: lower index wins.
        assert_eq!(dtm.grid().values, vec![1.0, 1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn normalization_subtracts_cell_elevation() {
        let dtm = build_dtm(&[gp(0.5, 0.5, 2.5)], 1.0).unwrap();
        let out = normalize_heights(&[gp(0.4, 0.4, 12.5), gp(0.5, 0.5, 2.5)], &dtm);
        assert_eq!(out[0].z, 10.0);
        assert_eq!(out[1].z, 0.0);
    }

    #[test]
    fn normalization_is_shift_invariant() {
        let ground: Vec<PointRecord> = (0..50)
            .map(|i| gp(i as f64 * 0.37 % 5.0, i as f64 * 0.53 % 5.0, (i % 7) as f64 * 0.1))
            .collect();
        let pts: Vec<PointRecord> = (0..30)
            .map(|i| gp(i as f64 * 0.17 % 5.0, i as f64 * 0.29 % 5.0, 3.0 + i as f64))
            .collect();
        let dtm = build_dtm(&ground, 1.0).unwrap();
        let a = normalize_heights(&pts, &dtm);
        let shifted_ground: Vec<_> = ground.iter().map(|p| gp(p.x, p.y, p.z + 100.0)).collect();
        let shifted: Vec<_> = pts.iter().map(|p| gp(p.x, p.y, p.z + 100.0)).collect();
        let dtm2 = build_dtm(&shifted_ground, 1.0).unwrap();
        let b = normalize_heights(&shifted, &dtm2);
        for (p, q) in a.iter().zip(&b) {
            assert!((p.z - q.z).abs() < 1e-9);
        }
    }
}
