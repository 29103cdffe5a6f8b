//! Shared domain types: species taxonomy, point records, segments and the
//! seeding contract used by every randomized routine.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown species code {0} (expected 1..=9)")]
    UnknownSpeciesCode(i64),
    #[error("unknown species name {0:?}")]
    UnknownSpeciesName(String),
    #[error("unknown {kind} value {value:?}")]
    UnknownCategory { kind: &'static str, value: String },
    #[error("invalid point: {0}")]
    InvalidPoint(String),
}

/// The nine tree species of the benchmark, in canonical confusion-matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Pine,
    Spruce,
    Birch,
    Maple,
    Aspen,
    Rowan,
    Oak,
    Linden,
    Alder,
}

pub const NUM_SPECIES: usize = 9;

impl Species {
    pub const ALL: [Species; NUM_SPECIES] = [
        Species::Pine,
        Species::Spruce,
        Species::Birch,
        Species::Maple,
        Species::Aspen,
        Species::Rowan,
        Species::Oak,
        Species::Linden,
        Species::Alder,
    ];

    pub fn from_code(code: i64) -> Result<Self, ModelError> {
        if (1..=NUM_SPECIES as i64).contains(&code) {
            Ok(Self::ALL[(code - 1) as usize])
        } else {
            Err(ModelError::UnknownSpeciesCode(code))
        }
    }

    /// Numeric code 1..=9.
    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based index, the row/column of this species in a confusion matrix.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::Pine => "pine",
            Species::Spruce => "spruce",
            Species::Birch => "birch",
            Species::Maple => "maple",
            Species::Aspen => "aspen",
            Species::Rowan => "rowan",
            Species::Oak => "oak",
            Species::Linden => "linden",
            Species::Alder => "alder",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Species {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|sp| sp.name() == lower)
            .ok_or_else(|| ModelError::UnknownSpeciesName(s.to_string()))
    }
}

/// Coordinates of anything that lives in 3D space.
pub trait HasPosition {
    fn position(&self) -> [f64; 3];
}

/// One laser return.
///
/// `reflectance` holds the calibrated backscatter of the return in the units
/// of the source sensor (dB for reflectance, dimensionless for range-corrected
/// intensity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub channel: u8,
    pub reflectance: f64,
    pub amplitude: Option<f64>,
    pub echo_deviation: Option<f64>,
    pub return_number: u8,
    pub num_returns: u8,
}

impl PointRecord {
    /// Checks the type invariants: channel in 1..=3, 1 <= return_number <=
    /// num_returns, finite coordinates and attributes.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=3).contains(&self.channel) {
            return Err(ModelError::InvalidPoint(format!(
                "channel {} outside 1..=3",
                self.channel
            )));
        }
        if self.return_number < 1 || self.return_number > self.num_returns {
            return Err(ModelError::InvalidPoint(format!(
                "return_number {} not in 1..={}",
                self.return_number, self.num_returns
            )));
        }
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(ModelError::InvalidPoint("non-finite coordinate".into()));
        }
        if !self.reflectance.is_finite()
            || self.amplitude.is_some_and(|v| !v.is_finite())
            || self.echo_deviation.is_some_and(|v| !v.is_finite())
        {
            return Err(ModelError::InvalidPoint("non-finite attribute".into()));
        }
        Ok(())
    }

    /// 0-based channel slot.
    pub fn channel_index(&self) -> usize {
        (self.channel - 1) as usize
    }

    pub fn echo_type(&self) -> EchoType {
        if self.num_returns <= 1 {
            EchoType::Single
        } else if self.return_number == 1 {
            EchoType::First
        } else if self.return_number == self.num_returns {
            EchoType::Last
        } else {
            EchoType::Intermediate
        }
    }
}

impl HasPosition for PointRecord {
    fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl HasPosition for [f64; 3] {
    fn position(&self) -> [f64; 3] {
        *self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EchoType {
    Single,
    First,
    Intermediate,
    Last,
}

/// A point with the reflectance of the nearest return of every channel.
///
/// `None` marks a channel with no return within the fusion radius. The slot of
/// the point's own channel is always populated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedPoint {
    pub point: PointRecord,
    pub refl: [Option<f64>; 3],
}

impl FusedPoint {
    /// A fused point that only knows its own channel.
    pub fn unfused(point: PointRecord) -> Self {
        let mut refl = [None; 3];
        refl[point.channel_index()] = Some(point.reflectance);
        Self { point, refl }
    }
}

impl HasPosition for FusedPoint {
    fn position(&self) -> [f64; 3] {
        self.point.position()
    }
}

/// All points of one delineated tree crown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCloud {
    pub segment_id: u32,
    pub points: Vec<FusedPoint>,
    /// Raster footprint, pixel count times squared cell size (m²).
    pub footprint_area: f64,
    /// Maximum normalized height (m), clamped at 0.
    pub height: f64,
    pub channel_counts: [usize; 3],
}

impl SegmentCloud {
    pub fn new(segment_id: u32, points: Vec<FusedPoint>, footprint_area: f64) -> Self {
        let height = points
            .iter()
            .map(|p| p.point.z)
            .fold(0.0f64, f64::max);
        let mut channel_counts = [0usize; 3];
        for p in &points {
            channel_counts[p.point.channel_index()] += 1;
        }
        Self {
            segment_id,
            points,
            footprint_area,
            height,
            channel_counts,
        }
    }

    /// Points per square meter of footprint.
    pub fn density(&self) -> f64 {
        if self.footprint_area > 0.0 {
            self.points.len() as f64 / self.footprint_area
        } else {
            0.0
        }
    }

    /// Returns a copy holding only the points at `indices` (footprint kept).
    pub fn with_point_subset(&self, indices: &[usize]) -> Self {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        Self::new(self.segment_id, points, self.footprint_area)
    }
}

macro_rules! text_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant,)+
            #[default]
            Unassigned,
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                    $name::Unassigned => "",
                }
            }

            /// Parses the canonical text form; an empty field is `Unassigned`.
            pub fn parse_field(s: &str) -> Result<Self, ModelError> {
                match s.trim() {
                    "" | "unassigned" => Ok($name::Unassigned),
                    $($text => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownCategory { kind: $kind, value: other.to_string() }),
                }
            }

            /// Label used in reports ("unassigned" for the default variant).
            pub fn report_key(self) -> &'static str {
                match self {
                    $name::Unassigned => "unassigned",
                    other => other.as_str(),
                }
            }
        }
    };
}

text_enum!(
    /// Manual quality class of a segment.
    ProfileCategory, "profile_category", {
        SingleTree => "single_tree",
        LargeTreeWithUndergrowth => "large_tree_with_undergrowth",
        ManySameSpecies => "many_same_species",
        ManyManySpecies => "many_many_species",
        TreeSection => "tree_section",
    }
);

text_enum!(
    /// Structural context of a crown relative to its neighbors.
    CrownClass, "crown_class", {
        Isolated => "isolated",
        Dominant => "dominant",
        CoDominant => "co_dominant",
        SmallerNextToLarger => "smaller_next_to_larger",
        Roadside => "roadside",
    }
);

text_enum!(
    Split, "split", {
        Train => "train",
        Test => "test",
    }
);

/// Ground-truth annotation for one segment id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub segment_id: u32,
    pub species: Species,
    pub profile_category: ProfileCategory,
    pub crown_class: CrownClass,
    pub split: Split,
}

/// A segment with its reference species and annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub cloud: SegmentCloud,
    pub species: Species,
    pub profile_category: ProfileCategory,
    pub crown_class: CrownClass,
    pub split: Split,
}

impl LabeledSegment {
    pub fn new(cloud: SegmentCloud, label: &SegmentLabel) -> Self {
        Self {
            cloud,
            species: label.species,
            profile_category: label.profile_category,
            crown_class: label.crown_class,
            split: label.split,
        }
    }

    pub fn label(&self) -> SegmentLabel {
        SegmentLabel {
            segment_id: self.cloud.segment_id,
            species: self.species,
            profile_category: self.profile_category,
            crown_class: self.crown_class,
            split: self.split,
        }
    }
}

/// Master seed of a randomized computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Child seed for the `index`-th independent job (tree, replicate, fold…).
    pub fn derive(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909))))
    }

    /// Child seed keyed by a stream tag and an index, so that different
    /// consumers of one master seed never share a stream.
    pub fn derive_tagged(self, tag: &str, index: u64) -> RngSeed {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in tag.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.derive(h).derive(index)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn species_codes() {
        assert_eq!(Species::from_code(1).unwrap(), Species::Pine);
        assert_eq!(Species::from_code(9).unwrap(), Species::Alder);
        assert_eq!(
            Species::from_code(0),
            Err(ModelError::UnknownSpeciesCode(0))
        );
        assert!(Species::from_code(10).is_err());
        for c in 1..=9 {
            assert_eq!(i64::from(Species::from_code(c).unwrap().code()), c);
        }
    }

    #[test]
    fn species_names_round_trip() {
        for sp in Species::ALL {
            assert_eq!(sp.name().parse::<Species>().unwrap(), sp);
        }
        assert!("larch".parse::<Species>().is_err());
    }

    fn pt(channel: u8, rn: u8, nr: u8) -> PointRecord {
        PointRecord {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            channel,
            reflectance: -5.0,
            amplitude: None,
            echo_deviation: None,
            return_number: rn,
            num_returns: nr,
        }
    }

    #[test]
    fn point_validation() {
        assert!(pt(1, 1, 1).validate().is_ok());
        assert!(pt(4, 1, 1).validate().is_err());
        assert!(pt(0, 1, 1).validate().is_err());
        assert!(pt(1, 3, 2).validate().is_err());
        assert!(pt(1, 0, 2).validate().is_err());
        let mut p = pt(2, 1, 1);
        p.z = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn echo_types() {
        assert_eq!(pt(1, 1, 1).echo_type(), EchoType::Single);
        assert_eq!(pt(1, 1, 3).echo_type(), EchoType::First);
        assert_eq!(pt(1, 2, 3).echo_type(), EchoType::Intermediate);
        assert_eq!(pt(1, 3, 3).echo_type(), EchoType::Last);
    }

    #[test]
    fn categories_parse_empty_as_unassigned() {
        assert_eq!(
            ProfileCategory::parse_field("").unwrap(),
            ProfileCategory::Unassigned
        );
        assert_eq!(
            CrownClass::parse_field("smaller_next_to_larger").unwrap(),
            CrownClass::SmallerNextToLarger
        );
        assert_eq!(Split::parse_field("test").unwrap(), Split::Test);
        assert!(Split::parse_field("validation").is_err());
    }

    #[test]
    fn unfused_point_keeps_own_channel() {
        let f = FusedPoint::unfused(pt(2, 1, 1));
        assert_eq!(f.refl, [None, Some(-5.0), None]);
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let s = RngSeed(42);
        assert_eq!(s.derive(3), s.derive(3));
        assert_ne!(s.derive(3), s.derive(4));
        assert_ne!(s.derive_tagged("a", 0), s.derive_tagged("b", 0));
        let a: Vec<u32> = (0..5).map(|_| 0).scan(s.rng(), |r, _| Some(r.random())).collect();
        let b: Vec<u32> = (0..5).map(|_| 0).scan(s.rng(), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
    }
}
