use std::collections::HashMap;

use crate::kdtree::dist2;
use crate::model::{HasPosition, RngSeed, SegmentCloud};

/// Indices of the points kept by [`voxel_thin`], ascending.
pub fn voxel_thin_indices<P: HasPosition>(points: &[P], side: f64) -> Vec<usize> {
    assert!(side > 0.0, "voxel side must be positive");
    let key = |p: &[f64; 3]| {
        (
            (p[0] / side).floor() as i64,
            (p[1] / side).floor() as i64,
            (p[2] / side).floor() as i64,
        )
    };
    let coords: Vec<[f64; 3]> = points.iter().map(HasPosition::position).collect();
    let mut slot_of: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut sums: Vec<([f64; 3], usize)> = Vec::new();
    let mut slots = Vec::with_capacity(coords.len());
    for p in &coords {
        let slot = *slot_of.entry(key(p)).or_insert_with(|| {
            sums.push(([0.0; 3], 0));
            sums.len() - 1
        });
        let (s, n) = &mut sums[slot];
        for d in 0..3 {
            s[d] += p[d];
        }
        *n += 1;
        slots.push(slot);
    }
    let centroids: Vec<[f64; 3]> = sums
        .iter()
        .map(|(s, n)| {
            let n = *n as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; sums.len()];
    for (i, p) in coords.iter().enumerate() {
        let slot = slots[i];
        let d = dist2(p, &centroids[slot]);
        if best[slot].is_none_or(|(_, bd)| d < bd) {
            best[slot] = Some((i, d));
        }
    }
    let mut keep: Vec<usize> = best.into_iter().flatten().map(|(i, _)| i).collect();
    keep.sort_unstable();
    keep
}

/// Keeps at most one point per cubic voxel of side `side`: the one nearest
/// the centroid of the voxel's points (ties to the lower index). Survivors
/// keep their input order.
pub fn voxel_thin<P: HasPosition + Clone>(points: &[P], side: f64) -> Vec<P> {
    voxel_thin_indices(points, side)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Uniform random subsample (without replacement) down to
/// `round(target · footprint_area)` points. Segments already at or below the
/// target keep every point. The footprint is unchanged.
pub fn subsample_to_density(segment: &SegmentCloud, target: f64, seed: RngSeed) -> SegmentCloud {
    assert!(target > 0.0, "target density must be positive");
    let wanted = (target * segment.footprint_area).round();
    let n = segment.points.len();
    if wanted >= n as f64 {
        return segment.clone();
    }
    let mut rng = seed.rng();
    let mut idx = rand::seq::index::sample(&mut rng, n, wanted as usize).into_vec();
    idx.sort_unstable();
    segment.with_point_subset(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusedPoint, PointRecord};

    #[test]
    fn identical_points_collapse() {
        let pts = vec![[1.0, 2.0, 3.0]; 10];
        assert_eq!(voxel_thin_indices(&pts, 0.05), vec![0]);
    }

    #[test]
    fn sparse_grid_survives() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push([i as f64 * 0.1, j as f64 * 0.1, 0.3]);
            }
        }
        assert_eq!(voxel_thin(&pts, 0.05).len(), 100);
    }

    #[test]
    fn keeps_point_nearest_centroid() {
        let pts = vec![[0.001, 0.0, 0.0], [0.02, 0.02, 0.02], [0.04, 0.04, 0.04]];
        assert_eq!(voxel_thin_indices(&pts, 0.05), vec![1]);
    }

    #[test]
    fn idempotent() {
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|i| {
                let t = i as f64;
                [(t * 0.0137) % 0.5, (t * 0.0291) % 0.5, (t * 0.0071) % 0.5]
            })
            .collect();
        let once = voxel_thin(&pts, 0.05);
        let twice = voxel_thin(&once, 0.05);
        assert_eq!(once, twice);
    }

    fn segment(n: usize, area: f64) -> SegmentCloud {
        let pts = (0..n)
            .map(|i| {
                FusedPoint::unfused(PointRecord {
                    x: i as f64,
                    y: 0.0,
                    z: 1.0,
                    channel: (i % 3) as u8 + 1,
                    reflectance: -5.0,
                    amplitude: None,
                    echo_deviation: None,
                    return_number: 1,
                    num_returns: 1,
                })
            })
            .collect();
        SegmentCloud::new(1, pts, area)
    }

    #[test]
    fn subsample_count_and_clamp() {
        let s = segment(1000, 10.0);
        assert_eq!(subsample_to_density(&s, 10.0, RngSeed(1)).points.len(), 100);
        assert_eq!(subsample_to_density(&s, 1e6, RngSeed(1)), s);
        assert_eq!(subsample_to_density(&s, 100.0, RngSeed(1)), s);
    }

    #[test]
    fn subsample_deterministic_and_ordered() {
        let s = segment(1000, 10.0);
        let a = subsample_to_density(&s, 10.0, RngSeed(9));
        let b = subsample_to_density(&s, 10.0, RngSeed(9));
        assert_eq!(a, b);
        assert!(a.points.windows(2).all(|w| w[0].point.x < w[1].point.x));
        let c = subsample_to_density(&s, 10.0, RngSeed(10));
        assert_ne!(a, c);
        assert_eq!(a.footprint_area, 10.0);
    }
}
