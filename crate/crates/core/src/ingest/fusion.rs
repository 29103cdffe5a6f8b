use crate::exec;
use crate::kdtree::KdTree;
use crate::model::{FusedPoint, PointRecord};

/// Search radius of the channel fusion (m).
pub const DEFAULT_FUSION_RADIUS: f64 = 0.20;

/// Attaches to every point the reflectance of the nearest return of each
/// other channel within `radius` (3D, inclusive). Channels with no return in
/// range stay `None`; equal distances resolve to the lower input index.
pub fn fuse_channels(points: &[PointRecord], radius: f64) -> Vec<FusedPoint> {
    assert!(radius > 0.0, "fusion radius must be positive");
    let mut members: [Vec<usize>; 3] = Default::default();
    for (i, p) in points.iter().enumerate() {
        members[p.channel_index()].push(i);
    }
    let trees: Vec<KdTree> = members
        .iter()
        .map(|idx| KdTree::build(idx.iter().map(|&i| [points[i].x, points[i].y, points[i].z]).collect()))
        .collect();
    let r2 = radius * radius;
    exec::map_slice(points, |p| {
        let mut fused = FusedPoint::unfused(*p);
        let q = [p.x, p.y, p.z];
        for c in 0..3 {
            if c == p.channel_index() {
                continue;
            }
            if let Some((k, _)) = trees[c].nearest_within(&q, r2) {
                fused.refl[c] = Some(points[members[c][k]].reflectance);
            }
        }
        fused
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, channel: u8, refl: f64) -> PointRecord {
        PointRecord {
            x,
            y: 0.0,
            z: 0.0,
            channel,
            reflectance: refl,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        }
    }

    #[test]
    fn coincident_points_share_triplet() {
        let pts = [p(0.0, 1, -5.0), p(0.0, 2, -6.0), p(0.0, 3, -7.0)];
        for f in fuse_channels(&pts, DEFAULT_FUSION_RADIUS) {
            assert_eq!(f.refl, [Some(-5.0), Some(-6.0), Some(-7.0)]);
        }
    }

    #[test]
    fn beyond_radius_is_na() {
        let pts = [p(0.0, 1, -5.0), p(0.25, 2, -6.0)];
        let f = fuse_channels(&pts, DEFAULT_FUSION_RADIUS);
        assert_eq!(f[0].refl, [Some(-5.0), None, None]);
        assert_eq!(f[1].refl, [None, Some(-6.0), None]);
    }

    #[test]
    fn nearest_wins_and_ties_go_to_lower_index() {
        let pts = [
            p(0.0, 1, -5.0),
            p(0.1, 2, -1.0),
            p(-0.1, 2, -2.0),
            p(0.05, 2, -3.0),
        ];
        let f = fuse_channels(&pts, DEFAULT_FUSION_RADIUS);
        assert_eq!(f[0].refl[1], Some(-3.0));
        let tie = [p(0.0, 1, -5.0), p(0.1, 2, -1.0), p(-0.1, 2, -2.0)];
        assert_eq!(fuse_channels(&tie, 0.2)[0].refl[1], Some(-1.0));
    }
}
