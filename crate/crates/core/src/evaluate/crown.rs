use serde::{Deserialize, Serialize};

use crate::kdtree::KdTree;
use crate::model::CrownClass;

/// Tree-top position and height of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrownInput {
    pub segment_id: u32,
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

/// Distances (m) and height margin of the crown-class rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrownRules {
    pub roadside_radius: f64,
    pub neighborhood_radius: f64,
    pub larger_radius: f64,
    pub larger_margin: f64,
}

impl Default for CrownRules {
    fn default() -> Self {
        Self {
            roadside_radius: 2.0,
            neighborhood_radius: 8.0,
            larger_radius: 6.0,
            larger_margin: 5.0,
        }
    }
}

/// Crown class of every segment, in input order. Distances are horizontal
/// between tree tops and inclusive. The first matching rule wins:
///
/// 1. `Roadside`: a registry position lies within `roadside_radius`.
/// 2. `Isolated`: every other segment within `neighborhood_radius` is at most
///    half as tall.
/// 3. `Dominant`: every other segment within `neighborhood_radius` is lower.
/// 4. `SmallerNextToLarger`: some segment within `larger_radius` is at least
///    `larger_margin` taller.
/// 5. `CoDominant` otherwise.
pub fn assign_crown_classes(
    segments: &[CrownInput],
    roadside_registry: &[(f64, f64)],
    rules: &CrownRules,
) -> Vec<CrownClass> {
    let tops = KdTree::build(segments.iter().map(|s| [s.x, s.y, 0.0]).collect());
    let registry = KdTree::build(roadside_registry.iter().map(|&(x, y)| [x, y, 0.0]).collect());
    let r2 = |r: f64| r * r;
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let q = [s.x, s.y, 0.0];
            if registry.nearest_within(&q, r2(rules.roadside_radius)).is_some() {
                return CrownClass::Roadside;
            }
            let mut isolated = true;
            let mut tallest = true;
            tops.for_each_within(&q, r2(rules.neighborhood_radius), |j, _| {
                if j == i {
                    return;
                }
                let h = segments[j].height;
                if h > s.height / 2.0 {
                    isolated = false;
                }
                if h >= s.height {
                    tallest = false;
                }
            });
            if isolated {
                return CrownClass::Isolated;
            }
            if tallest {
                return CrownClass::Dominant;
            }
            let mut larger = false;
            tops.for_each_within(&q, r2(rules.larger_radius), |j, _| {
                if j != i && segments[j].height >= s.height + rules.larger_margin {
                    larger = true;
                }
            });
            if larger {
                CrownClass::SmallerNextToLarger
            } else {
                CrownClass::CoDominant
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: u32, x: f64, y: f64, h: f64) -> CrownInput {
        CrownInput {
            segment_id: id,
            x,
            y,
            height: h,
        }
    }

    #[test]
    fn rule_instances() {
        let rules = CrownRules::default();
        // Isolated: neighbors within 8 m are at most half the height.
        let a = [seg(1, 0.0, 0.0, 20.0), seg(2, 5.0, 0.0, 10.0), seg(3, 20.0, 0.0, 30.0)];
        assert_eq!(assign_crown_classes(&a, &[], &rules)[0], CrownClass::Isolated);
        // Smaller next to larger: 26 m neighbor at 5 m.
        let b = [seg(1, 0.0, 0.0, 20.0), seg(2, 5.0, 0.0, 26.0)];
        let cls = assign_crown_classes(&b, &[], &rules);
        assert_eq!(cls[0], CrownClass::SmallerNextToLarger);
        assert_eq!(cls[1], CrownClass::Dominant);
        // Co-dominant: similar neighbor.
        let c = [seg(1, 0.0, 0.0, 20.0), seg(2, 5.0, 0.0, 22.0)];
        assert_eq!(assign_crown_classes(&c, &[], &rules)[0], CrownClass::CoDominant);
        // Taller neighbor beyond 6 m but within 8 m.
        let d = [seg(1, 0.0, 0.0, 20.0), seg(2, 7.0, 0.0, 30.0)];
        assert_eq!(assign_crown_classes(&d, &[], &rules)[0], CrownClass::CoDominant);
    }

    #[test]
    fn roadside_first() {
        let s = [seg(1, 0.0, 0.0, 20.0)];
        let cls = assign_crown_classes(&s, &[(1.5, 0.0)], &CrownRules::default());
        assert_eq!(cls[0], CrownClass::Roadside);
        let cls = assign_crown_classes(&s, &[(2.5, 0.0)], &CrownRules::default());
        assert_eq!(cls[0], CrownClass::Isolated);
    }
}
