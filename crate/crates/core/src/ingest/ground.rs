use std::collections::HashMap;

use crate::exec;
use crate::kdtree::KdTree;
use crate::model::HasPosition;

/// Indices into the input slice, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundPartition {
    pub ground: Vec<usize>,
    pub vegetation: Vec<usize>,
    pub noise: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct GroundParams {
    /// 3D radius of the isolation test (m).
    pub noise_radius: f64,
    /// A point with fewer neighbors than this inside `noise_radius` is noise.
    pub min_neighbors: usize,
    /// Side of the square cells of the lowest-point search (m).
    pub cell_size: f64,
    /// Height above the cell minimum still counted as ground (m).
    pub ground_tolerance: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            noise_radius: 1.0,
            min_neighbors: 3,
            cell_size: 1.0,
            ground_tolerance: 0.30,
        }
    }
}

/// Splits points into ground, vegetation and noise with the default
/// isolation filter (fewer than 3 neighbors within 1 m) and the 1 m
/// lowest-point rule (within 0.30 m of the cell minimum).
pub fn classify_ground_and_noise<P: HasPosition + Sync>(points: &[P]) -> GroundPartition {
    classify_ground_and_noise_with(points, &GroundParams::default())
}

pub fn classify_ground_and_noise_with<P: HasPosition + Sync>(
    points: &[P],
    params: &GroundParams,
) -> GroundPartition {
    let coords: Vec<[f64; 3]> = points.iter().map(HasPosition::position).collect();
    let tree = KdTree::build(coords);
    let r2 = params.noise_radius * params.noise_radius;
    let is_noise = exec::map_range(points.len(), |i| {
        let q = tree.coords()[i];
        let mut n = 0usize;
        tree.for_each_within(&q, r2, |j, _| {
            if j != i {
                n += 1;
            }
        });
        n < params.min_neighbors
    });

    let cell = |p: &[f64; 3]| {
        (
            (p[0] / params.cell_size).floor() as i64,
            (p[1] / params.cell_size).floor() as i64,
        )
    };
    let mut lowest: HashMap<(i64, i64), f64> = HashMap::new();
    for (p, _) in tree.coords().iter().zip(&is_noise).filter(|(_, n)| !**n) {
        let e = lowest.entry(cell(p)).or_insert(f64::INFINITY);
        *e = e.min(p[2]);
    }

    let mut out = GroundPartition::default();
    for (i, p) in tree.coords().iter().enumerate() {
        if is_noise[i] {
            out.noise.push(i);
        } else if p[2] - lowest[&cell(p)] <= params.ground_tolerance {
            out.ground.push(i);
        } else {
            out.vegetation.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_plane(n: usize, step: f64, z: f64) -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                v.push([i as f64 * step, j as f64 * step, z]);
            }
        }
        v
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts: Vec<[f64; 3]> = Vec::new();
        // 10x10x10 cluster = 1000 points.
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    pts.push([i as f64 * 0.2, j as f64 * 0.2, k as f64 * 0.2]);
                }
            }
        }
        pts.push([1.0, 1.0, 52.0]);
        let part = classify_ground_and_noise(&pts);
        assert_eq!(part.noise, vec![1000]);
    }

    #[test]
    fn flat_plane_is_all_ground() {
        let pts = grid_plane(20, 0.5, 3.0);
        let part = classify_ground_and_noise(&pts);
        assert_eq!(part.ground.len(), pts.len());
        assert!(part.vegetation.is_empty() && part.noise.is_empty());
    }

    #[test]
    fn canopy_above_plane_is_vegetation() {
        let mut pts = grid_plane(20, 0.5, 0.0);
        let n_ground = pts.len();
        for i in 0..10 {
            for j in 0..10 {
                pts.push([2.0 + i as f64 * 0.3, 2.0 + j as f64 * 0.3, 5.0]);
            }
        }
        let part = classify_ground_and_noise(&pts);
        assert_eq!(part.ground, (0..n_ground).collect::<Vec<_>>());
        assert_eq!(part.vegetation, (n_ground..pts.len()).collect::<Vec<_>>());
    }
}
