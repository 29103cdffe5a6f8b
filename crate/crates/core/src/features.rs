//! Per-segment feature vectors.
//!
//! The schema has 61 columns in five groups:
//!
//! | group    | n  | columns |
//! |----------|----|---------|
//! | geometry | 15 | height, z-percentiles p10..p90 over height, z std over height, canopy relief ratio, footprint area, hull diameter, point density |
//! | channel  | 36 | per channel: reflectance mean, std, median, p90 and an 8-bin histogram |
//! | echo     | 4  | fraction of single, first, intermediate and last returns |
//! | index    | 3  | normalized differences of linearized channel means |
//! | flags    | 3  | 1 when the segment has no point on the channel |
//!
//! Histograms span the per-channel `[p1, p99]` range of the training split,
//! stored in a [`FeatureSchema`] together with the imputation medians, so a
//! test segment never influences its own normalization.

use std::borrow::Borrow;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::model::{EchoType, SegmentCloud};
use crate::stats;

pub const SCHEMA_VERSION: &str = "canopy-features/1";
pub const NUM_FEATURES: usize = 61;
pub const HIST_BINS: usize = 8;
const CHANNEL_BLOCK: usize = 4 + HIST_BINS;
const GEOMETRY_START: usize = 0;
const CHANNEL_START: usize = 15;
const ECHO_START: usize = CHANNEL_START + 3 * CHANNEL_BLOCK;
const INDEX_START: usize = ECHO_START + 4;
const FLAG_START: usize = INDEX_START + 3;
const INDEX_EPS: f64 = 1e-9;
/// Half-width used when a channel's training range collapses to a point (dB).
pub const DEGENERATE_HALF_WIDTH: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("training split has no segments with points")]
    EmptyTrainingSplit,
    #[error("segment {0} has no points")]
    EmptySegment(u32),
    #[error("feature schema has no imputation medians; fit it first")]
    SchemaNotFitted,
    #[error("expected {expected} features, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unsupported schema version {0:?}")]
    VersionMismatch(String),
    #[error("feature table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Geometry,
    Channel,
    Echo,
    Index,
    Flags,
}

/// Which columns a classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    All,
    /// Geometry and echo columns only; no reflectance information.
    GeometryOnly,
}

impl FeatureSet {
    pub fn columns(self) -> Vec<usize> {
        let groups = feature_groups();
        (0..NUM_FEATURES)
            .filter(|&i| match self {
                FeatureSet::All => true,
                FeatureSet::GeometryOnly => {
                    matches!(groups[i], FeatureGroup::Geometry | FeatureGroup::Echo)
                }
            })
            .collect()
    }

    /// Copies the selected columns of every row.
    pub fn select(self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if self == FeatureSet::All {
            return rows.to_vec();
        }
        let cols = self.columns();
        rows.iter()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect()
    }
}

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = vec!["height".into()];
    for p in (10..=90).step_by(10) {
        names.push(format!("z_p{p}_rel"));
    }
    names.extend(
        [
            "z_std_rel",
            "canopy_relief_ratio",
            "footprint_area",
            "hull_diameter",
            "point_density",
        ]
        .map(String::from),
    );
    for c in 1..=3 {
        for stat in ["mean", "std", "median", "p90"] {
            names.push(format!("c{c}_refl_{stat}"));
        }
        for b in 0..HIST_BINS {
            names.push(format!("c{c}_hist{b}"));
        }
    }
    names.extend(
        [
            "echo_single",
            "echo_first",
            "echo_intermediate",
            "echo_last",
            "ndi_c2_c3",
            "ndi_c1_c3",
            "ndi_c1_c2",
            "missing_c1",
            "missing_c2",
            "missing_c3",
        ]
        .map(String::from),
    );
    debug_assert_eq!(names.len(), NUM_FEATURES);
    names
}

pub fn feature_groups() -> [FeatureGroup; NUM_FEATURES] {
    let mut g = [FeatureGroup::Geometry; NUM_FEATURES];
    for (i, slot) in g.iter_mut().enumerate() {
        *slot = if i < CHANNEL_START {
            FeatureGroup::Geometry
        } else if i < ECHO_START {
            FeatureGroup::Channel
        } else if i < INDEX_START {
            FeatureGroup::Echo
        } else if i < FLAG_START {
            FeatureGroup::Index
        } else {
            FeatureGroup::Flags
        };
    }
    g
}

/// Training-split constants for featurization and imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub names: Vec<String>,
    /// Per-channel histogram range `[lo, hi]` in reflectance units.
    pub channel_ranges: [[f64; 2]; 3],
    /// Channels whose training range collapsed and was widened.
    pub degenerate_ranges: [bool; 3],
    /// Channels absent from the training split; their block is always imputed.
    pub always_impute: [bool; 3],
    /// Per-feature training medians. `None` until fitted.
    pub medians: Option<Vec<f64>>,
}

impl FeatureSchema {
    /// A schema with explicit ranges and no medians.
    pub fn with_ranges(channel_ranges: [[f64; 2]; 3]) -> Self {
        Self {
            version: SCHEMA_VERSION.into(),
            names: feature_names(),
            channel_ranges,
            degenerate_ranges: [false; 3],
            always_impute: [false; 3],
            medians: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let schema: Self =
            serde_json::from_str(text).map_err(|e| FeatureError::Table(e.to_string()))?;
        if schema.version != SCHEMA_VERSION {
            return Err(FeatureError::VersionMismatch(schema.version));
        }
        Ok(schema)
    }
}

/// Learns histogram ranges and imputation medians from training segments.
pub fn fit_schema<S: Borrow<SegmentCloud> + Sync>(train: &[S]) -> Result<FeatureSchema, FeatureError> {
    if train.iter().all(|s| s.borrow().points.is_empty()) {
        return Err(FeatureError::EmptyTrainingSplit);
    }
    let mut per_channel: [Vec<f64>; 3] = Default::default();
    for s in train {
        for p in &s.borrow().points {
            per_channel[p.point.channel_index()].push(p.point.reflectance);
        }
    }
    let mut schema = FeatureSchema::with_ranges([[0.0, 1.0]; 3]);
    for (c, values) in per_channel.iter_mut().enumerate() {
        if values.is_empty() {
            schema.always_impute[c] = true;
            continue;
        }
        values.sort_by(f64::total_cmp);
        let lo = stats::percentile_sorted(values, 1.0).unwrap();
        let hi = stats::percentile_sorted(values, 99.0).unwrap();
        if hi > lo {
            schema.channel_ranges[c] = [lo, hi];
        } else {
            schema.degenerate_ranges[c] = true;
            schema.channel_ranges[c] = [lo - DEGENERATE_HALF_WIDTH, hi + DEGENERATE_HALF_WIDTH];
        }
    }
    let rows = exec::map_slice(train, |s| {
        let s = s.borrow();
        if s.points.is_empty() {
            None
        } else {
            Some(featurize_unchecked(s, &schema))
        }
    });
    let medians = (0..NUM_FEATURES)
        .map(|j| stats::median_finite(rows.iter().flatten().map(|r| r[j])).unwrap_or(0.0))
        .collect();
    schema.medians = Some(medians);
    Ok(schema)
}

/// Raw feature vector of one segment; missing values are NaN.
pub fn featurize(segment: &SegmentCloud, schema: &FeatureSchema) -> Result<Vec<f64>, FeatureError> {
    if segment.points.is_empty() {
        return Err(FeatureError::EmptySegment(segment.segment_id));
    }
    Ok(featurize_unchecked(segment, schema))
}

fn featurize_unchecked(segment: &SegmentCloud, schema: &FeatureSchema) -> Vec<f64> {
    let mut f = vec![f64::NAN; NUM_FEATURES];
    geometry(segment, &mut f[GEOMETRY_START..CHANNEL_START]);

    let mut refl: [Vec<f64>; 3] = Default::default();
    for p in &segment.points {
        refl[p.point.channel_index()].push(p.point.reflectance);
    }
    let mut means = [f64::NAN; 3];
    for c in 0..3 {
        let block = &mut f[CHANNEL_START + c * CHANNEL_BLOCK..CHANNEL_START + (c + 1) * CHANNEL_BLOCK];
        if refl[c].is_empty() || schema.always_impute[c] {
            continue;
        }
        let v = &mut refl[c];
        v.sort_by(f64::total_cmp);
        let m = stats::mean(v).unwrap();
        means[c] = m;
        block[0] = m;
        block[1] = stats::std_pop(v).unwrap();
        block[2] = stats::percentile_sorted(v, 50.0).unwrap();
        block[3] = stats::percentile_sorted(v, 90.0).unwrap();
        let [lo, hi] = schema.channel_ranges[c];
        let mut hist = [0usize; HIST_BINS];
        for &x in v.iter() {
            let t = ((x - lo) / (hi - lo) * HIST_BINS as f64).floor();
            hist[t.clamp(0.0, (HIST_BINS - 1) as f64) as usize] += 1;
        }
        for (b, &n) in hist.iter().enumerate() {
            block[4 + b] = n as f64 / v.len() as f64;
        }
    }

    let mut echo = [0usize; 4];
    for p in &segment.points {
        let k = match p.point.echo_type() {
            EchoType::Single => 0,
            EchoType::First => 1,
            EchoType::Intermediate => 2,
            EchoType::Last => 3,
        };
        echo[k] += 1;
    }
    for k in 0..4 {
        f[ECHO_START + k] = echo[k] as f64 / segment.points.len() as f64;
    }

    let lin = means.map(|m| 10f64.powf(m / 10.0));
    for (k, (a, b)) in [(1, 2), (0, 2), (0, 1)].into_iter().enumerate() {
        f[INDEX_START + k] = (lin[a] - lin[b]) / (lin[a] + lin[b] + INDEX_EPS);
    }
    for c in 0..3 {
        f[FLAG_START + c] = if segment.channel_counts[c] == 0 { 1.0 } else { 0.0 };
    }
    f
}

fn geometry(segment: &SegmentCloud, out: &mut [f64]) {
    let mut z: Vec<f64> = segment.points.iter().map(|p| p.point.z).collect();
    z.sort_by(f64::total_cmp);
    let h = z[z.len() - 1];
    let zmin = z[0];
    out[0] = h;
    let rel = |v: f64| if h > 0.0 { v / h } else { 0.0 };
    for (k, q) in (10..=90).step_by(10).enumerate() {
        out[1 + k] = rel(stats::percentile_sorted(&z, q as f64).unwrap());
    }
    out[10] = rel(stats::std_pop(&z).unwrap());
    let mean = stats::mean(&z).unwrap();
    out[11] = if h > zmin { (mean - zmin) / (h - zmin) } else { 0.0 };
    out[12] = segment.footprint_area;
    let xy: Vec<[f64; 2]> = segment.points.iter().map(|p| [p.point.x, p.point.y]).collect();
    out[13] = hull_diameter(&xy);
    out[14] = segment.density();
}

/// Largest distance between two points of the 2D convex hull.
pub fn hull_diameter(xy: &[[f64; 2]]) -> f64 {
    let hull = convex_hull(xy);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            let (dx, dy) = (hull[i][0] - hull[j][0], hull[i][1] - hull[j][1]);
            best = best.max(dx * dx + dy * dy);
        }
    }
    best.sqrt()
}

/// Monotone-chain convex hull, counterclockwise, without collinear points.
pub fn convex_hull(xy: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = xy.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Replaces every NaN with the training median of its column.
pub fn impute(vector: &[f64], schema: &FeatureSchema) -> Result<Vec<f64>, FeatureError> {
    let medians = schema.medians.as_ref().ok_or(FeatureError::SchemaNotFitted)?;
    if vector.len() != medians.len() {
        return Err(FeatureError::LengthMismatch {
            expected: medians.len(),
            got: vector.len(),
        });
    }
    Ok(vector
        .iter()
        .zip(medians)
        .map(|(&v, &m)| if v.is_nan() { m } else { v })
        .collect())
}

/// Featurizes and imputes a batch of segments in input order.
pub fn featurize_all<S: Borrow<SegmentCloud> + Sync>(
    segments: &[S],
    schema: &FeatureSchema,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    exec::try_map_range(segments.len(), |i| {
        impute(&featurize(segments[i].borrow(), schema)?, schema)
    })
}

/// Feature rows keyed by segment id, as exchanged through `features.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub segment_ids: Vec<u32>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Writes `segment_id` plus one column per feature; NaN is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let err = |e: csv::Error| FeatureError::Table(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["segment_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (id, row) in self.segment_ids.iter().zip(&self.rows) {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| FeatureError::Table(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| FeatureError::Table(e.to_string()))?.clone();
        if header.get(0) != Some("segment_id") {
            return Err(FeatureError::Table("first column must be segment_id".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let (mut segment_ids, mut rows) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(|e| FeatureError::Table(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| FeatureError::Table(format!("line {line}: bad {what}"));
            segment_ids.push(rec[0].trim().parse().map_err(|_| bad("segment_id"))?);
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    let v = v.trim();
                    if v.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        v.parse::<f64>().map_err(|_| bad("value"))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != names.len() {
                return Err(bad("field count"));
            }
            rows.push(row);
        }
        Ok(Self {
            names,
            segment_ids,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusedPoint, PointRecord};

    fn pt(x: f64, y: f64, z: f64, channel: u8, refl: f64) -> FusedPoint {
        FusedPoint::unfused(PointRecord {
            x,
            y,
            z,
            channel,
            reflectance: refl,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        })
    }

    fn seg(points: Vec<FusedPoint>) -> SegmentCloud {
        SegmentCloud::new(1, points, 10.0)
    }

    #[test]
    fn names_and_groups_line_up() {
        let names = feature_names();
        assert_eq!(names.len(), NUM_FEATURES);
        assert_eq!(names[CHANNEL_START], "c1_refl_mean");
        assert_eq!(names[ECHO_START], "echo_single");
        assert_eq!(names[FLAG_START + 2], "missing_c3");
        assert_eq!(FeatureSet::GeometryOnly.columns().len(), 19);
    }

    #[test]
    fn single_point_segment() {
        let schema = FeatureSchema::with_ranges([[-10.0, 0.0]; 3]);
        let f = featurize(&seg(vec![pt(1.0, 2.0, 10.0, 1, -5.0)]), &schema).unwrap();
        assert_eq!(f[0], 10.0);
        assert!(f[1..10].iter().all(|&v| v == 1.0));
        assert_eq!(f[10], 0.0);
        assert!(f[CHANNEL_START + CHANNEL_BLOCK..ECHO_START].iter().all(|v| v.is_nan()));
        assert_eq!(&f[FLAG_START..], &[0.0, 1.0, 1.0]);
        assert!(f[INDEX_START..FLAG_START].iter().all(|v| v.is_nan()));
    }

    #[test]
    fn channel_moments() {
        let schema = FeatureSchema::with_ranges([[-10.0, 0.0]; 3]);
        let s = seg(vec![pt(0.0, 0.0, 5.0, 1, -5.0), pt(0.0, 0.0, 5.0, 1, -7.0)]);
        let f = featurize(&s, &schema).unwrap();
        assert_eq!(f[CHANNEL_START], -6.0);
        assert_eq!(f[CHANNEL_START + 1], 1.0);
        let hist = &f[CHANNEL_START + 4..CHANNEL_START + 12];
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_missing_channels() {
        let s = seg(vec![
            pt(0.0, 0.0, 5.0, 2, -5.0),
            pt(1.0, 0.0, 6.0, 2, -5.0),
            pt(1.0, 1.0, 6.0, 1, -3.0),
        ]);
        let schema = fit_schema(&[s.clone()]).unwrap();
        assert_eq!(schema.channel_ranges[1], [-5.5, -4.5]);
        assert!(schema.degenerate_ranges[1]);
        assert!(schema.always_impute[2]);
        let imputed = impute(&featurize(&s, &schema).unwrap(), &schema).unwrap();
        assert!(imputed.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn impute_rules() {
        let mut schema = FeatureSchema::with_ranges([[0.0, 1.0]; 3]);
        let v = vec![1.0; NUM_FEATURES];
        assert_eq!(impute(&v, &schema), Err(FeatureError::SchemaNotFitted));
        let mut med = vec![0.0; NUM_FEATURES];
        med[40] = 0.42;
        schema.medians = Some(med);
        assert_eq!(impute(&v, &schema).unwrap(), v);
        let mut w = v.clone();
        w[40] = f64::NAN;
        assert_eq!(impute(&w, &schema).unwrap()[40], 0.42);
    }

    #[test]
    fn translation_invariant() {
        let schema = FeatureSchema::with_ranges([[-10.0, 0.0]; 3]);
        let pts: Vec<FusedPoint> = (0..50)
            .map(|i| pt((i % 7) as f64, (i % 5) as f64 * 0.7, i as f64 * 0.3, (i % 3) as u8 + 1, -8.0 + (i % 9) as f64))
            .collect();
        let shifted: Vec<FusedPoint> = pts
            .iter()
            .map(|p| {
                let mut q = *p;
                q.point.x += 1000.0;
                q.point.y -= 250.0;
                q
            })
            .collect();
        let a = featurize(&seg(pts), &schema).unwrap();
        let b = featurize(&seg(shifted), &schema).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        assert!(a[INDEX_START..FLAG_START].iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn hull_diameter_of_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        assert_eq!(convex_hull(&sq).len(), 4);
        assert!((hull_diameter(&sq) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(hull_diameter(&[[3.0, 3.0]]), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let table = FeatureTable {
            names: vec!["a".into(), "b".into()],
            segment_ids: vec![4, 9],
            rows: vec![vec![1.5, f64::NAN], vec![-2.0, 0.25]],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = FeatureTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.segment_ids, table.segment_ids);
        assert!(back.rows[0][1].is_nan());
        assert_eq!(back.rows[1], table.rows[1]);
    }
}
