//! Pixel-exact polygonization of a segment raster.
//!
//! Boundaries follow cell edges (marching squares on each segment's binary
//! mask with the contour on the pixel lattice), so polygon area equals pixel
//! count times squared cell size. Exterior rings are counterclockwise, holes
//! clockwise, and every ring repeats its first vertex at the end. Diagonal
//! pinch points are split with a left-turn rule, which keeps 4-connected
//! components apart.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Value};

use super::watershed::SegmentRaster;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
}

impl Polygon {
    /// Exterior area minus hole areas.
    pub fn area(&self) -> f64 {
        ring_area(&self.exterior) + self.holes.iter().map(|h| ring_area(h)).sum::<f64>()
    }
}

/// Signed shoelace area (positive for counterclockwise).
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for w in ring.windows(2) {
        s += w[0][0] * w[1][1] - w[1][0] * w[0][1];
    }
    0.5 * s
}

type V = (i64, i64);

fn turn_rank(din: V, dout: V) -> u8 {
    let cross = din.0 * dout.1 - din.1 * dout.0;
    if cross > 0 {
        0 // left
    } else if cross == 0 && din == dout {
        1 // straight
    } else if cross < 0 {
        2 // right
    } else {
        3 // reversal
    }
}

fn trace_lattice_rings(mask: &dyn Fn(i64, i64) -> bool, cells: &[(i64, i64)]) -> Vec<Vec<V>> {
    // Lattice frame: X = col, Y = rows-from-top negated so that Y grows north.
    // Cell (r, c) spans X ∈ [c, c+1], Y ∈ [-r-1, -r].
    let mut edges: Vec<(V, V)> = Vec::new();
    for &(r, c) in cells {
        let (x0, x1, y0, y1) = (c, c + 1, -r - 1, -r);
        if !mask(r + 1, c) {
            edges.push(((x0, y0), (x1, y0)));
        }
        if !mask(r, c + 1) {
            edges.push(((x1, y0), (x1, y1)));
        }
        if !mask(r - 1, c) {
            edges.push(((x1, y1), (x0, y1)));
        }
        if !mask(r, c - 1) {
            edges.push(((x0, y1), (x0, y0)));
        }
    }
    edges.sort_unstable();
    let mut from: HashMap<V, Vec<usize>> = HashMap::new();
    for (k, e) in edges.iter().enumerate() {
        from.entry(e.0).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = vec![edges[start].0];
        let mut cur = start;
        loop {
            used[cur] = true;
            let (a, b) = edges[cur];
            let din = (b.0 - a.0, b.1 - a.1);
            let next = from[&b]
                .iter()
                .copied()
                .filter(|&k| !used[k] || k == start)
                .min_by_key(|&k| {
                    let (c, d) = edges[k];
                    (turn_rank(din, (d.0 - c.0, d.1 - c.1)), k)
                })
                .expect("boundary edges form closed rings");
            if next == start {
                break;
            }
            ring.push(b);
            cur = next;
        }
        rings.push(simplify(ring));
    }
    rings
}

/// Drops vertices that sit on a straight run.
fn simplify(ring: Vec<V>) -> Vec<V> {
    let n = ring.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = ring[(i + n - 1) % n];
        let q = ring[i];
        let s = ring[(i + 1) % n];
        let cross = (q.0 - p.0) * (s.1 - q.1) - (q.1 - p.1) * (s.0 - q.0);
        if cross != 0 {
            out.push(q);
        }
    }
    out
}

fn lattice_area2(ring: &[V]) -> i64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum()
}

fn contains(ring: &[V], px: f64, py: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let (ax, ay, bx, by) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64);
        if (ay > py) != (by > py) && px < ax + (py - ay) * (bx - ax) / (by - ay) {
            inside = !inside;
        }
    }
    inside
}

/// Polygons of every segment in world coordinates, keyed by segment id.
pub fn trace_boundaries(raster: &SegmentRaster) -> BTreeMap<u32, Vec<Polygon>> {
    let g = raster.grid();
    let (nrows, ncols) = (g.nrows as i64, g.ncols as i64);
    let mut cells_of: BTreeMap<u32, Vec<(i64, i64)>> = BTreeMap::new();
    for r in 0..nrows {
        for c in 0..ncols {
            let id = raster.id_at(r as usize, c as usize);
            if id != 0 {
                cells_of.entry(id).or_default().push((r, c));
            }
        }
    }
    let to_world = |v: V| -> [f64; 2] {
        [
            g.xllcorner + v.0 as f64 * g.cellsize,
            g.yllcorner + (nrows + v.1) as f64 * g.cellsize,
        ]
    };
    let close = |ring: &[V]| -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = ring.iter().map(|&v| to_world(v)).collect();
        out.push(out[0]);
        out
    };

    let mut out = BTreeMap::new();
    for (id, cells) in cells_of {
        let mask = |r: i64, c: i64| {
            r >= 0 && c >= 0 && r < nrows && c < ncols && raster.id_at(r as usize, c as usize) == id
        };
        let rings = trace_lattice_rings(&mask, &cells);
        let (exteriors, holes): (Vec<_>, Vec<_>) =
            rings.into_iter().partition(|r| lattice_area2(r) > 0);
        let mut polys: Vec<(Vec<V>, Vec<Vec<V>>)> =
            exteriors.into_iter().map(|e| (e, Vec::new())).collect();
        for hole in holes {
            // Center of the segment cell to the left of the hole's first edge.
            let (a, b) = (hole[0], hole[1 % hole.len()]);
            let (dx, dy) = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
            let px = a.0 as f64 + 0.5 * dx as f64 - 0.5 * dy as f64;
            let py = a.1 as f64 + 0.5 * dy as f64 + 0.5 * dx as f64;
            let owner = polys
                .iter()
                .position(|(e, _)| contains(e, px, py))
                .unwrap_or(0);
            polys[owner].1.push(hole);
        }
        let polygons = polys
            .iter()
            .map(|(e, hs)| Polygon {
                exterior: close(e),
                holes: hs.iter().map(|h| close(h)).collect(),
            })
            .collect();
        out.insert(id, polygons);
    }
    out
}

/// GeoJSON FeatureCollection with one MultiPolygon feature per segment and a
/// `segment_id` property. `extra` may add properties per segment id.
pub fn boundaries_to_geojson(
    boundaries: &BTreeMap<u32, Vec<Polygon>>,
    extra: impl Fn(u32) -> Option<serde_json::Map<String, Value>>,
) -> Value {
    let features: Vec<Value> = boundaries
        .iter()
        .map(|(id, polys)| {
            let coords: Vec<Value> = polys
                .iter()
                .map(|p| {
                    let mut rings = vec![json!(p.exterior)];
                    rings.extend(p.holes.iter().map(|h| json!(h)));
                    Value::Array(rings)
                })
                .collect();
            let mut props = serde_json::Map::new();
            props.insert("segment_id".into(), json!(id));
            if let Some(more) = extra(*id) {
                props.extend(more);
            }
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": { "type": "MultiPolygon", "coordinates": coords },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AsciiGrid, GridGeometry};

    fn raster(rows: &[&[u32]], cellsize: f64) -> SegmentRaster {
        let geo = GridGeometry {
            ncols: rows[0].len(),
            nrows: rows.len(),
            xllcorner: 100.0,
            yllcorner: 200.0,
            cellsize,
        };
        let mut g = AsciiGrid::filled(geo, 0.0, 0.0);
        g.values = rows.iter().flat_map(|r| r.iter().map(|&v| v as f64)).collect();
        SegmentRaster(g)
    }

    #[test]
    fn single_pixel_square() {
        let b = trace_boundaries(&raster(&[&[5]], 0.5));
        let polys = &b[&5];
        assert_eq!(polys.len(), 1);
        let ext = &polys[0].exterior;
        assert_eq!(ext.len(), 5);
        assert_eq!(ext.first(), ext.last());
        assert_eq!(ring_area(ext), 0.25);
        assert_eq!(ext[0], [100.0, 200.0]);
    }

    #[test]
    fn two_by_two_block() {
        let b = trace_boundaries(&raster(&[&[0, 0, 0], &[0, 3, 3], &[0, 3, 3]], 0.5));
        let ext = &b[&3][0].exterior;
        assert_eq!(ext.len(), 5);
        assert_eq!(ring_area(ext), 1.0);
        let xs: Vec<f64> = ext.iter().map(|p| p[0]).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(span, 1.0);
    }

    #[test]
    fn ring_with_hole() {
        let b = trace_boundaries(&raster(
            &[&[1, 1, 1], &[1, 0, 1], &[1, 1, 1]],
            1.0,
        ));
        let polys = &b[&1];
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].holes.len(), 1);
        assert!(ring_area(&polys[0].holes[0]) < 0.0);
        assert_eq!(polys[0].area(), 8.0);
    }

    #[test]
    fn diagonal_pixels_stay_apart() {
        let b = trace_boundaries(&raster(&[&[2, 0], &[0, 2]], 1.0));
        let polys = &b[&2];
        assert_eq!(polys.len(), 2);
        assert!(polys.iter().all(|p| p.area() == 1.0));
    }

    #[test]
    fn geojson_shape() {
        let b = trace_boundaries(&raster(&[&[1, 2]], 1.0));
        let gj = boundaries_to_geojson(&b, |_| None);
        assert_eq!(gj["type"], "FeatureCollection");
        assert_eq!(gj["features"].as_array().unwrap().len(), 2);
        assert_eq!(gj["features"][1]["properties"]["segment_id"], 2);
    }
}
