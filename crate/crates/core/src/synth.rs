//! Synthetic multispectral forests with exact truth.
//!
//! Trees are placed by dart-throwing Poisson-disk sampling and drawn as one of
//! three crown solids over a tilted, gently undulating terrain. Heights of
//! crown surfaces are defined above the local terrain, so normalized point
//! heights are known exactly. Each pulse hits the top crown surface first and
//! may produce further returns inside the crown; every return is recorded on
//! one channel with a reflectance drawn from the species' channel
//! distribution plus a per-tree offset.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{assign_crown_classes, CrownInput, CrownRules};
use crate::exec;
use crate::grid::{AsciiGrid, GridGeometry};
use crate::ingest::{write_labels, write_points};
use crate::kdtree::KdTree;
use crate::model::{
    FusedPoint, LabeledSegment, PointRecord, ProfileCategory, RngSeed, SegmentCloud,
    SegmentLabel, Species, Split,
};
use crate::segmentation::SegmentRaster;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("placed only {placed} of {requested} trees with the requested spacing")]
    SpacingInfeasible { placed: usize, requested: usize },
    #[error("invalid forest spec: {0}")]
    InvalidSpec(String),
    #[error("writing {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrownShape {
    Cone,
    Ellipsoid,
    SphereOnStem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesArchetype {
    pub species: Species,
    pub shape: CrownShape,
    /// Uniform height range (m).
    pub height_range: (f64, f64),
    /// Crown radius over tree height.
    pub crown_radius_ratio: f64,
    /// Crown length over tree height (ignored for sphere-on-stem crowns).
    pub crown_length_ratio: f64,
    /// Per-channel reflectance mean and spread of single returns (dB).
    pub reflectance_mean: [f64; 3],
    pub reflectance_std: [f64; 3],
    pub density_multiplier: f64,
}

/// Nine archetypes whose channel means differ by at least 3 dB on channel 1
/// or channel 2 for every pair of species. Shapes and heights overlap, so
/// geometry alone separates them only partly.
pub fn default_archetypes() -> Vec<SpeciesArchetype> {
    use CrownShape::*;
    let table = [
        (Species::Pine, SphereOnStem, (14.0, 26.0), 0.18, 0.35),
        (Species::Spruce, Cone, (12.0, 28.0), 0.15, 0.80),
        (Species::Birch, Ellipsoid, (12.0, 24.0), 0.20, 0.60),
        (Species::Maple, Ellipsoid, (8.0, 20.0), 0.25, 0.60),
        (Species::Aspen, Ellipsoid, (14.0, 26.0), 0.17, 0.50),
        (Species::Rowan, SphereOnStem, (6.0, 14.0), 0.28, 0.50),
        (Species::Oak, SphereOnStem, (10.0, 22.0), 0.26, 0.50),
        (Species::Linden, Ellipsoid, (10.0, 22.0), 0.24, 0.65),
        (Species::Alder, Cone, (8.0, 18.0), 0.20, 0.70),
    ];
    table
        .iter()
        .enumerate()
        .map(|(k, &(species, shape, height_range, r, l))| {
            let (i, j) = (k / 3, k % 3);
            SpeciesArchetype {
                species,
                shape,
                height_range,
                crown_radius_ratio: r,
                crown_length_ratio: l,
                reflectance_mean: [
                    -14.0 + 3.0 * i as f64,
                    -12.0 + 3.0 * j as f64,
                    -10.0 + 1.5 * ((i + j) % 3) as f64,
                ],
                reflectance_std: [2.0; 3],
                density_multiplier: 1.0,
            }
        })
        .collect()
}

/// z = base + slope_x·x + slope_y·y + amplitude·sin(2πx/λ)·cos(2πy/λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub base: f64,
    pub slope_x: f64,
    pub slope_y: f64,
    pub amplitude: f64,
    pub wavelength: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Self {
            base: 100.0,
            slope_x: 0.05,
            slope_y: -0.03,
            amplitude: 0.4,
            wavelength: 40.0,
        }
    }
}

impl Terrain {
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        let w = std::f64::consts::TAU / self.wavelength;
        self.base
            + self.slope_x * x
            + self.slope_y * y
            + self.amplitude * (w * x).sin() * (w * y).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestSpec {
    /// South-west corner of the plot.
    pub origin: (f64, f64),
    pub width: f64,
    pub depth: f64,
    pub n_trees: usize,
    pub min_spacing: f64,
    /// Trees stay this far from the plot edge.
    pub edge_margin: f64,
    pub archetypes: Vec<SpeciesArchetype>,
    /// Pulses per m² of crown footprint.
    pub crown_density: f64,
    /// Side of the ground sampling subcells (one point each).
    pub ground_spacing: f64,
    pub noise_points: usize,
    /// Std of the per-tree offset added to every channel mean (dB).
    pub tree_reflectance_jitter: f64,
    pub terrain: Terrain,
    /// Cell size of the truth segment raster.
    pub cellsize: f64,
    /// Crown surfaces below this height are background in the truth raster.
    pub min_height: f64,
    /// Upper bound on crown radii (m); `None` keeps the archetype ratios.
    pub max_crown_radius: Option<f64>,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            origin: (500_000.0, 6_900_000.0),
            width: 80.0,
            depth: 80.0,
            n_trees: 50,
            min_spacing: 6.0,
            edge_margin: 4.0,
            archetypes: default_archetypes(),
            crown_density: 20.0,
            ground_spacing: 0.5,
            noise_points: 10,
            tree_reflectance_jitter: 0.7,
            terrain: Terrain::default(),
            cellsize: 0.5,
            min_height: 2.0,
            max_crown_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedTree {
    pub tree_id: u32,
    pub species: Species,
    pub shape: CrownShape,
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub crown_radius: f64,
    pub crown_base: f64,
    pub channel_offset: [f64; 3],
}

impl PlantedTree {
    /// Height of the upper crown surface at horizontal distance `rho` from
    /// the stem, if the crown covers that distance.
    pub fn top_surface(&self, rho: f64) -> Option<f64> {
        let r = self.crown_radius;
        if rho > r {
            return None;
        }
        let t = rho / r;
        Some(match self.shape {
            CrownShape::Cone => self.crown_base + (self.height - self.crown_base) * (1.0 - t),
            CrownShape::Ellipsoid => {
                let c = (self.height - self.crown_base) / 2.0;
                self.crown_base + c + c * (1.0 - t * t).sqrt()
            }
            CrownShape::SphereOnStem => self.height - r + (r * r - rho * rho).sqrt(),
        })
    }

    fn bottom_surface(&self, rho: f64) -> f64 {
        let r = self.crown_radius;
        let t = (rho / r).min(1.0);
        match self.shape {
            CrownShape::Cone => self.crown_base,
            CrownShape::Ellipsoid => {
                let c = (self.height - self.crown_base) / 2.0;
                self.crown_base + c - c * (1.0 - t * t).sqrt()
            }
            CrownShape::SphereOnStem => self.height - r - (r * r - (t * r).powi(2)).sqrt(),
        }
    }

    pub fn footprint_area(&self) -> f64 {
        std::f64::consts::PI * self.crown_radius * self.crown_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointTruth {
    Ground,
    Vegetation,
    Noise,
}

#[derive(Debug, Clone)]
pub struct SyntheticForest {
    pub spec: ForestSpec,
    pub trees: Vec<PlantedTree>,
    /// Points with absolute heights (terrain included).
    pub points: Vec<PointRecord>,
    /// Tree id of every point (0 for ground and noise).
    pub point_tree: Vec<u32>,
    pub point_class: Vec<PointTruth>,
    /// Tree id of the highest crown surface over each cell.
    pub truth_segments: SegmentRaster,
    pub labels: Vec<SegmentLabel>,
}

fn plant(
    arch: &SpeciesArchetype,
    tree_id: u32,
    x: f64,
    y: f64,
    jitter: f64,
    max_radius: f64,
    rng: &mut impl Rng,
) -> PlantedTree {
    let (lo, hi) = arch.height_range;
    let height = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let crown_radius = (arch.crown_radius_ratio * height).min(max_radius);
    let crown_base = match arch.shape {
        CrownShape::SphereOnStem => (height - 2.0 * crown_radius).max(0.5),
        _ => height * (1.0 - arch.crown_length_ratio),
    };
    let offset = Normal::new(0.0, jitter.max(0.0)).expect("valid std");
    PlantedTree {
        tree_id,
        species: arch.species,
        shape: arch.shape,
        x,
        y,
        height,
        crown_radius,
        crown_base,
        channel_offset: [offset.sample(rng), offset.sample(rng), offset.sample(rng)],
    }
}

fn channel_normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std.max(0.0)).expect("valid reflectance distribution")
}

/// Returns of one tree with heights above ground, relative to the stem at
/// the origin.
fn tree_returns(
    tree: &PlantedTree,
    arch: &SpeciesArchetype,
    pulse_density: f64,
    rng: &mut impl Rng,
) -> Vec<PointRecord> {
    let dists: Vec<Normal<f64>> = (0..3)
        .map(|c| {
            channel_normal(
                arch.reflectance_mean[c] + tree.channel_offset[c],
                arch.reflectance_std[c],
            )
        })
        .collect();
    let n_pulses = (pulse_density * arch.density_multiplier * tree.footprint_area()).round() as usize;
    let mut out = Vec::with_capacity(n_pulses * 2);
    let r = tree.crown_radius;
    for _ in 0..n_pulses.max(1) {
        let rho = r * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let (dx, dy) = (rho * phi.cos(), rho * phi.sin());
        let top = tree.top_surface(rho).unwrap_or(tree.crown_base);
        let bottom = tree.bottom_surface(rho);
        let u: f64 = rng.random();
        let n_ret: u8 = 1 + u8::from(u < 0.6) + u8::from(u < 0.25);
        let mut zs = vec![top];
        for _ in 1..n_ret {
            zs.push(rng.random_range(bottom.min(top)..=top));
        }
        zs[1..].sort_by(|a, b| b.total_cmp(a));
        let channel: u8 = rng.random_range(1..=3);
        for (k, z) in zs.into_iter().enumerate() {
            out.push(PointRecord {
                x: dx,
                y: dy,
                z,
                channel,
                reflectance: dists[(channel - 1) as usize].sample(rng),
                amplitude: None,
                echo_deviation: None,
                return_number: k as u8 + 1,
                num_returns: n_ret,
            });
        }
    }
    // Stem returns below the crown, last of two.
    let stem_top = tree.crown_base.max(0.6);
    let n_stem = ((stem_top - 0.5) * 4.0).ceil() as usize;
    let stem = channel_normal(-12.0, 1.5);
    for _ in 0..n_stem {
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let channel: u8 = rng.random_range(1..=3);
        out.push(PointRecord {
            x: 0.12 * phi.cos(),
            y: 0.12 * phi.sin(),
            z: rng.random_range(0.5..stem_top),
            channel,
            reflectance: stem.sample(rng),
            amplitude: None,
            echo_deviation: None,
            return_number: 2,
            num_returns: 2,
        });
    }
    out
}

fn place_trees(spec: &ForestSpec, rng: &mut impl Rng) -> Result<Vec<(f64, f64)>, SynthError> {
    let (x0, y0) = spec.origin;
    let m = spec.edge_margin;
    if spec.width <= 2.0 * m || spec.depth <= 2.0 * m {
        return Err(SynthError::InvalidSpec("plot smaller than its margins".into()));
    }
    let d2 = spec.min_spacing * spec.min_spacing;
    let mut placed: Vec<(f64, f64)> = Vec::with_capacity(spec.n_trees);
    let max_attempts = 2000 * spec.n_trees.max(1);
    let mut attempts = 0;
    while placed.len() < spec.n_trees {
        if attempts == max_attempts {
            return Err(SynthError::SpacingInfeasible {
                placed: placed.len(),
                requested: spec.n_trees,
            });
        }
        attempts += 1;
        let x = rng.random_range(x0 + m..x0 + spec.width - m);
        let y = rng.random_range(y0 + m..y0 + spec.depth - m);
        if placed
            .iter()
            .all(|&(px, py)| (px - x).powi(2) + (py - y).powi(2) >= d2)
        {
            placed.push((x, y));
        }
    }
    Ok(placed)
}

fn validate(spec: &ForestSpec) -> Result<(), SynthError> {
    let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
    if spec.n_trees == 0 {
        return bad("n_trees must be at least 1");
    }
    if spec.archetypes.is_empty() {
        return bad("no archetypes");
    }
    if !(spec.min_spacing >= 0.0 && spec.crown_density > 0.0 && spec.ground_spacing > 0.0) {
        return bad("spacing and densities must be positive");
    }
    if !(spec.cellsize > 0.0) {
        return bad("cellsize must be positive");
    }
    if spec.max_crown_radius.is_some_and(|r| !(r > 0.0)) {
        return bad("max_crown_radius must be positive");
    }
    Ok(())
}

/// Generates a forest plot. Trees cycle through the archetypes in order.
pub fn generate_forest(spec: &ForestSpec, seed: RngSeed) -> Result<SyntheticForest, SynthError> {
    validate(spec)?;
    let positions = place_trees(spec, &mut seed.derive_tagged("placement", 0).rng())?;
    let trees: Vec<PlantedTree> = positions
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let arch = &spec.archetypes[i % spec.archetypes.len()];
            let mut rng = seed.derive_tagged("plant", i as u64).rng();
            plant(
                arch,
                i as u32 + 1,
                x,
                y,
                spec.tree_reflectance_jitter,
                spec.max_crown_radius.unwrap_or(f64::INFINITY),
                &mut rng,
            )
        })
        .collect();

    let per_tree = exec::map_range(trees.len(), |i| {
        let t = &trees[i];
        let arch = &spec.archetypes[i % spec.archetypes.len()];
        let mut rng = seed.derive_tagged("returns", i as u64).rng();
        tree_returns(t, arch, spec.crown_density, &mut rng)
            .into_iter()
            .map(|mut p| {
                p.x += t.x;
                p.y += t.y;
                p.z += spec.terrain.elevation(p.x, p.y);
                p
            })
            .collect::<Vec<_>>()
    });

    let (x0, y0) = spec.origin;
    let gs = spec.ground_spacing;
    let (gcols, grows) = (
        (spec.width / gs).floor() as usize,
        (spec.depth / gs).floor() as usize,
    );
    let ground_rows = exec::map_range(grows, |r| {
        let mut rng = seed.derive_tagged("ground", r as u64).rng();
        let refl = channel_normal(-9.0, 1.5);
        (0..gcols)
            .map(|c| {
                let x = x0 + (c as f64 + rng.random::<f64>()) * gs;
                let y = y0 + (r as f64 + rng.random::<f64>()) * gs;
                PointRecord {
                    x,
                    y,
                    z: spec.terrain.elevation(x, y),
                    channel: rng.random_range(1..=3),
                    reflectance: refl.sample(&mut rng),
                    amplitude: None,
                    echo_deviation: None,
                    return_number: 1,
                    num_returns: 1,
                }
            })
            .collect::<Vec<_>>()
    });

    let mut points = Vec::new();
    let mut point_tree = Vec::new();
    let mut point_class = Vec::new();
    for row in ground_rows {
        point_tree.extend(std::iter::repeat_n(0, row.len()));
        point_class.extend(std::iter::repeat_n(PointTruth::Ground, row.len()));
        points.extend(row);
    }
    for (t, pts) in trees.iter().zip(per_tree) {
        point_tree.extend(std::iter::repeat_n(t.tree_id, pts.len()));
        point_class.extend(std::iter::repeat_n(PointTruth::Vegetation, pts.len()));
        points.extend(pts);
    }
    let mut rng = seed.derive_tagged("noise", 0).rng();
    for _ in 0..spec.noise_points {
        let x = rng.random_range(x0..x0 + spec.width);
        let y = rng.random_range(y0..y0 + spec.depth);
        points.push(PointRecord {
            x,
            y,
            z: spec.terrain.elevation(x, y) + rng.random_range(45.0..60.0),
            channel: rng.random_range(1..=3),
            reflectance: rng.random_range(-20.0..-5.0),
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        });
        point_tree.push(0);
        point_class.push(PointTruth::Noise);
    }

    let truth_segments = truth_raster(spec, &trees);
    let crown = assign_crown_classes(
        &trees
            .iter()
            .map(|t| CrownInput {
                segment_id: t.tree_id,
                x: t.x,
                y: t.y,
                height: t.height,
            })
            .collect::<Vec<_>>(),
        &[],
        &CrownRules::default(),
    );
    let labels = trees
        .iter()
        .zip(crown)
        .map(|(t, crown_class)| SegmentLabel {
            segment_id: t.tree_id,
            species: t.species,
            profile_category: ProfileCategory::SingleTree,
            crown_class,
            split: Split::Unassigned,
        })
        .collect();
    Ok(SyntheticForest {
        spec: spec.clone(),
        trees,
        points,
        point_tree,
        point_class,
        truth_segments,
        labels,
    })
}

fn truth_raster(spec: &ForestSpec, trees: &[PlantedTree]) -> SegmentRaster {
    let geo = GridGeometry {
        ncols: (spec.width / spec.cellsize).ceil() as usize,
        nrows: (spec.depth / spec.cellsize).ceil() as usize,
        xllcorner: spec.origin.0,
        yllcorner: spec.origin.1,
        cellsize: spec.cellsize,
    };
    let index = KdTree::build(trees.iter().map(|t| [t.x, t.y, 0.0]).collect());
    let max_r = trees.iter().map(|t| t.crown_radius).fold(0.0, f64::max);
    let values = exec::map_range(geo.len(), |i| {
        let (x, y) = geo.cell_center(i / geo.ncols, i % geo.ncols);
        let mut best: Option<(f64, u32)> = None;
        index.for_each_within(&[x, y, 0.0], max_r * max_r, |j, d2| {
            let t = &trees[j];
            if let Some(z) = t.top_surface(d2.sqrt()) {
                if z >= spec.min_height && best.is_none_or(|(bz, bid)| z > bz || (z == bz && t.tree_id < bid)) {
                    best = Some((z, t.tree_id));
                }
            }
        });
        best.map_or(0.0, |(_, id)| f64::from(id))
    });
    let mut grid = AsciiGrid::filled(geo, 0.0, 0.0);
    grid.values = values;
    SegmentRaster(grid)
}

impl SyntheticForest {
    /// Points whose truth class is ground.
    pub fn ground_truth_indices(&self) -> Vec<usize> {
        self.indices_of(PointTruth::Ground)
    }

    pub fn indices_of(&self, class: PointTruth) -> Vec<usize> {
        self.point_class
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes `points.csv` (segment_id = truth tree, 0 for ground and noise),
    /// `labels.csv`, the truth `segments.grid` and `trees.json`.
    pub fn write_dataset(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path, e: String| SynthError::Io {
            path: path.display().to_string(),
            msg: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e.to_string()))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| io(&path, e.to_string()))
        };
        let rows: Vec<(u32, PointRecord)> = self
            .point_tree
            .iter()
            .copied()
            .zip(self.points.iter().copied())
            .collect();
        write_points(create("points.csv")?, &rows).map_err(|e| io(&dir.join("points.csv"), e.to_string()))?;
        write_labels(create("labels.csv")?, &self.labels)
            .map_err(|e| io(&dir.join("labels.csv"), e.to_string()))?;
        let grid_path = dir.join("segments.grid");
        self.truth_segments
            .grid()
            .write(&grid_path)
            .map_err(|e| io(&grid_path, e.to_string()))?;
        let trees_path = dir.join("trees.json");
        let json = serde_json::to_string_pretty(&self.trees).expect("trees serialize");
        std::fs::write(&trees_path, json + "\n").map_err(|e| io(&trees_path, e.to_string()))
    }
}

/// Isolated single-tree segments for classification experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentSetSpec {
    pub per_species: usize,
    pub archetypes: Vec<SpeciesArchetype>,
    /// Pulses per m² of crown footprint.
    pub crown_density: f64,
    pub tree_reflectance_jitter: f64,
}

impl Default for SegmentSetSpec {
    fn default() -> Self {
        Self {
            per_species: 200,
            archetypes: default_archetypes(),
            crown_density: 10.0,
            tree_reflectance_jitter: 0.7,
        }
    }
}

/// `per_species` segments of every archetype, grouped by archetype, with
/// ids 1, 2, … and footprint = crown disk area. Heights are above ground.
pub fn generate_segment_set(spec: &SegmentSetSpec, seed: RngSeed) -> Vec<LabeledSegment> {
    let n = spec.per_species * spec.archetypes.len();
    exec::map_range(n, |i| {
        let arch = &spec.archetypes[i / spec.per_species.max(1)];
        let mut rng = seed.derive_tagged("segment", i as u64).rng();
        let tree = plant(
            arch,
            i as u32 + 1,
            0.0,
            0.0,
            spec.tree_reflectance_jitter,
            f64::INFINITY,
            &mut rng,
        );
        let points: Vec<FusedPoint> = tree_returns(&tree, arch, spec.crown_density, &mut rng)
            .into_iter()
            .map(FusedPoint::unfused)
            .collect();
        let cloud = SegmentCloud::new(tree.tree_id, points, tree.footprint_area());
        LabeledSegment {
            cloud,
            species: arch.species,
            profile_category: ProfileCategory::SingleTree,
            crown_class: Default::default(),
            split: Split::Unassigned,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(n_trees: usize) -> ForestSpec {
        ForestSpec {
            origin: (0.0, 0.0),
            width: 30.0,
            depth: 30.0,
            n_trees,
            min_spacing: 4.0,
            edge_margin: 3.0,
            ..Default::default()
        }
    }

    #[test]
    fn archetypes_are_separated() {
        let a = default_archetypes();
        assert_eq!(a.len(), 9);
        for i in 0..9 {
            for j in i + 1..9 {
                let sep = (0..3)
                    .map(|c| (a[i].reflectance_mean[c] - a[j].reflectance_mean[c]).abs())
                    .fold(0.0, f64::max);
                assert!(sep >= 3.0, "{i} {j}");
            }
        }
    }

    #[test]
    fn single_cone_height() {
        let mut spec = small_spec(1);
        spec.archetypes = vec![SpeciesArchetype {
            height_range: (15.0, 15.0),
            ..default_archetypes()[1].clone()
        }];
        let f = generate_forest(&spec, RngSeed(1)).unwrap();
        let zmax = f
            .points
            .iter()
            .zip(&f.point_tree)
            .filter(|(_, &t)| t == 1)
            .map(|(p, _)| p.z - spec.terrain.elevation(p.x, p.y))
            .fold(f64::MIN, f64::max);
        assert!(zmax <= 15.0 + 1e-9 && zmax > 13.0, "{zmax}");
        assert_eq!(f.trees[0].top_surface(0.0), Some(15.0));
    }

    #[test]
    fn spacing_respected_and_infeasible_reported() {
        let f = generate_forest(&small_spec(2), RngSeed(2)).unwrap();
        let (a, b) = (f.trees[0], f.trees[1]);
        assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() >= 4.0);
        let mut crowded = small_spec(500);
        crowded.min_spacing = 5.0;
        assert!(matches!(
            generate_forest(&crowded, RngSeed(2)),
            Err(SynthError::SpacingInfeasible { requested: 500, .. })
        ));
    }

    #[test]
    fn deterministic() {
        let a = generate_forest(&small_spec(5), RngSeed(3)).unwrap();
        let b = generate_forest(&small_spec(5), RngSeed(3)).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.truth_segments, b.truth_segments);
    }

    #[test]
    fn channel_means_converge() {
        let arch = &default_archetypes()[4];
        let mut rng = RngSeed(4).rng();
        let tree = plant(arch, 1, 0.0, 0.0, 0.0, f64::INFINITY, &mut rng);
        let pts = tree_returns(&tree, arch, 200.0, &mut rng);
        for c in 0..3 {
            let v: Vec<f64> = pts
                .iter()
                .filter(|p| p.channel_index() == c && p.z >= tree.crown_base)
                .map(|p| p.reflectance)
                .collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let tol = 3.0 * arch.reflectance_std[c] / (v.len() as f64).sqrt();
            assert!((m - arch.reflectance_mean[c]).abs() < tol, "channel {c}: {m}");
        }
        let segs = generate_segment_set(
            &SegmentSetSpec {
                per_species: 2,
                ..Default::default()
            },
            RngSeed(4),
        );
        assert_eq!(segs.len(), 18);
        assert_eq!(segs[17].species, Species::Alder);
    }
}
