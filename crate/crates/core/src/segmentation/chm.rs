use serde::{Deserialize, Serialize};

use super::SegmentationError;
use crate::exec;
use crate::grid::{AsciiGrid, GridGeometry};
use crate::model::PointRecord;

pub const DEFAULT_CHM_CELLSIZE: f64 = 0.5;
pub const DEFAULT_CHM_CHANNELS: [u8; 2] = [1, 2];
const CHM_NODATA: f64 = -9999.0;
const CHUNK: usize = 1 << 16;

/// Canopy height raster (m above ground).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chm(pub AsciiGrid);

impl Chm {
    pub fn grid(&self) -> &AsciiGrid {
        &self.0
    }
}

/// Highest first return of the selected channels per cell; cells without a
/// qualifying return are 0. Heights must already be normalized. When
/// `extent` is `None` the raster covers the qualifying points.
pub fn build_chm(
    points: &[PointRecord],
    cellsize: f64,
    channels: &[u8],
    extent: Option<GridGeometry>,
) -> Result<Chm, SegmentationError> {
    let qualifying: Vec<&PointRecord> = points
        .iter()
        .filter(|p| p.return_number == 1 && channels.contains(&p.channel))
        .collect();
    if qualifying.is_empty() {
        return Err(SegmentationError::NoVegetationPoints);
    }
    let geometry = match extent {
        Some(g) => g,
        None => GridGeometry::covering(qualifying.iter().map(|p| (p.x, p.y)), cellsize)
            .ok_or(SegmentationError::NoVegetationPoints)?,
    };

    let n_chunks = qualifying.len().div_ceil(CHUNK);
    let partials = exec::map_range(n_chunks, |k| {
        let mut cells = vec![0.0f64; geometry.len()];
        let end = ((k + 1) * CHUNK).min(qualifying.len());
        for p in &qualifying[k * CHUNK..end] {
            if let Some((r, c)) = geometry.cell_of(p.x, p.y) {
                let v = &mut cells[geometry.index(r, c)];
                *v = v.max(p.z);
            }
        }
        cells
    });
    let mut grid = AsciiGrid::filled(geometry, 0.0, CHM_NODATA);
    for part in partials {
        for (dst, v) in grid.values.iter_mut().zip(part) {
            *dst = dst.max(v);
        }
    }
    Ok(Chm(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64, channel: u8, rn: u8) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            channel,
            reflectance: 0.0,
            amplitude: None,
            echo_deviation: None,
            return_number: rn,
            num_returns: rn.max(1),
        }
    }

    #[test]
    fn single_point_cell() {
        let geo = GridGeometry {
            ncols: 3,
            nrows: 3,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 0.5,
        };
        let chm = build_chm(&[p(0.75, 0.75, 10.0, 1, 1)], 0.5, &[1, 2], Some(geo)).unwrap();
        assert_eq!(chm.grid().get(1, 1), 10.0);
        assert_eq!(chm.grid().values.iter().filter(|&&v| v == 0.0).count(), 8);
    }

    #[test]
    fn max_rule_and_filters() {
        let pts = [
            p(0.1, 0.1, 8.0, 1, 1),
            p(0.2, 0.2, 12.0, 2, 1),
            p(0.2, 0.2, 20.0, 3, 1),
            p(0.2, 0.2, 30.0, 1, 2),
        ];
        let chm = build_chm(&pts, 0.5, &DEFAULT_CHM_CHANNELS, None).unwrap();
        assert_eq!(chm.grid().values, vec![12.0]);
    }

    #[test]
    fn no_points() {
        let pts = [p(0.1, 0.1, 8.0, 3, 1)];
        assert_eq!(
            build_chm(&pts, 0.5, &DEFAULT_CHM_CHANNELS, None),
            Err(SegmentationError::NoVegetationPoints)
        );
    }
}
