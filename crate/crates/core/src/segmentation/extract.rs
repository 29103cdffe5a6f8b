use std::collections::BTreeMap;

use super::watershed::SegmentRaster;
use crate::model::{FusedPoint, SegmentCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Non-empty segments in ascending id order.
    pub segments: Vec<SegmentCloud>,
    /// Points whose (x, y) falls outside the raster.
    pub dropped_outside: usize,
    /// Points on background (id 0) pixels.
    pub dropped_background: usize,
}

/// Groups points by the segment id under their (x, y). Footprint area is the
/// segment's pixel count times the squared cell size.
pub fn extract_segments(points: &[FusedPoint], raster: &SegmentRaster) -> Extraction {
    let counts = raster.pixel_counts();
    let cell_area = raster.grid().cellsize * raster.grid().cellsize;
    let mut groups: BTreeMap<u32, Vec<FusedPoint>> = BTreeMap::new();
    let (mut outside, mut background) = (0, 0);
    for p in points {
        match raster.lookup(p.point.x, p.point.y) {
            None => outside += 1,
            Some(0) => background += 1,
            Some(id) => groups.entry(id).or_default().push(*p),
        }
    }
    if outside > 0 {
        log::warn!("{outside} points outside the segment raster were dropped");
    }
    let segments = groups
        .into_iter()
        .map(|(id, pts)| SegmentCloud::new(id, pts, counts[id as usize] as f64 * cell_area))
        .collect();
    Extraction {
        segments,
        dropped_outside: outside,
        dropped_background: background,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AsciiGrid, GridGeometry};
    use crate::model::PointRecord;

    fn fp(x: f64, y: f64) -> FusedPoint {
        FusedPoint::unfused(PointRecord {
            x,
            y,
            z: 3.0,
            channel: 1,
            reflectance: -4.0,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        })
    }

    #[test]
    fn assigns_by_lookup() {
        let geo = GridGeometry {
            ncols: 3,
            nrows: 1,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 0.5,
        };
        let mut g = AsciiGrid::filled(geo, 0.0, 0.0);
        g.values = vec![7.0, 0.0, 7.0];
        let raster = SegmentRaster(g);
        let out = extract_segments(&[fp(0.1, 0.1), fp(0.6, 0.1), fp(1.2, 0.3), fp(5.0, 0.1)], &raster);
        assert_eq!(out.segments.len(), 1);
        assert_eq!(out.segments[0].segment_id, 7);
        assert_eq!(out.segments[0].points.len(), 2);
        assert_eq!(out.segments[0].footprint_area, 0.5);
        assert_eq!(out.dropped_background, 1);
        assert_eq!(out.dropped_outside, 1);
    }
}
