//! One function per pipeline subcommand. Every stage reads its inputs from
//! explicit paths or from the conventional file names under the output and
//! dataset directories, and returns the paths it wrote.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use canopy_core::classify::{
    oob_error, read_predictions, train_forest, write_predictions, ForestModel, ForestParams,
    ImbalanceMode, SegmentForestTrainer,
};
use canopy_core::evaluate::{
    assign_crown_classes, bootstrap_ci, breakdown, confusion, metrics, BootstrapCi, BreakdownBy,
    BreakdownEntry, CrownInput, CrownRules, MetricsReport,
};
use canopy_core::features::{featurize_all, fit_schema, FeatureSchema, FeatureSet, FeatureTable};
use canopy_core::ingest::{
    fuse_channels, render_depth_views, voxel_thin_indices, write_depth_views, DEFAULT_FUSION_RADIUS,
};
use canopy_core::model::SegmentLabel;
use canopy_core::scaling::{
    extrapolate_m, fit_sweep, stratified_holdout, sweep_density, sweep_training_size, ErrorKind,
    PowerLawFit, SweepResult,
};
use canopy_core::segmentation::{
    boundaries_to_geojson, extract_segments, normalize_plot, segment_plot, trace_boundaries,
    SegmentParams, SegmentRaster,
};
use canopy_core::synth::{generate_forest, generate_segment_set, ForestSpec, SegmentSetSpec};
use canopy_core::{plot, AsciiGrid, CrownClass, PointRecord, RngSeed, SegmentCloud, Species, Split};

use crate::files::{self, first_existing};
use crate::las;

/// Where a stage finds its inputs and puts its outputs.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub out: PathBuf,
    /// Synthetic or imported dataset directory (default `<out>/dataset`).
    pub dataset: PathBuf,
    /// Relative paths given to a stage are resolved against this directory.
    pub base: PathBuf,
    pub seed: RngSeed,
}

impl Ctx {
    pub fn new(out: impl Into<PathBuf>, seed: u64) -> Self {
        let out = out.into();
        Self {
            dataset: out.join("dataset"),
            out,
            base: PathBuf::new(),
            seed: RngSeed(seed),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The given path, else `<out>/name`, else `<dataset>/name`.
    fn input(&self, given: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match given {
            Some(p) => Ok(self.resolve(p)),
            None => first_existing(&[self.out.join(name), self.dataset.join(name)]),
        }
    }

    fn optional_input(&self, given: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        self.input(given, name).ok()
    }

    fn output(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.as_ref().map_or_else(|| self.out.join(name), |p| self.resolve(p))
    }

    fn stage_seed(&self, tag: &str) -> RngSeed {
        self.seed.derive_tagged(tag, 0)
    }
}

macro_rules! defaults_from_clap {
    ($($t:ty),+ $(,)?) => {
        $(impl Default for $t {
            fn default() -> Self {
                <$t>::parse_from(["canopy"])
            }
        })+
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetArg {
    All,
    GeometryOnly,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(v: FeatureSetArg) -> Self {
        match v {
            FeatureSetArg::All => FeatureSet::All,
            FeatureSetArg::GeometryOnly => FeatureSet::GeometryOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceArg {
    None,
    BalancedBootstrap,
    JitterOversample,
}

/// Random-forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 500)]
    pub trees: usize,
    /// Candidate features per split (default: floor of sqrt of the feature count).
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, value_enum, default_value_t = ImbalanceArg::None)]
    pub imbalance: ImbalanceArg,
    /// Class size targeted by jitter oversampling.
    #[arg(long, default_value_t = 125)]
    pub min_per_class: usize,
}

impl ForestArgs {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            max_depth: self.max_depth,
            imbalance: match self.imbalance {
                ImbalanceArg::None => ImbalanceMode::None,
                ImbalanceArg::BalancedBootstrap => ImbalanceMode::BalancedBootstrap,
                ImbalanceArg::JitterOversample => ImbalanceMode::JitterOversample,
            },
            min_per_class: self.min_per_class,
        }
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// JSON file with forest-plot parameters; missing keys take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub min_spacing: Option<f64>,
    #[arg(long)]
    pub max_crown_radius: Option<f64>,
    /// Generate this many isolated segments per species instead of a plot.
    #[arg(long)]
    pub segments_per_species: Option<usize>,
    /// Output directory (default: the dataset directory).
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(skip)]
    pub forest: Option<ForestSpec>,
    #[arg(skip)]
    pub segment_set: Option<SegmentSetSpec>,
}

pub fn synth(ctx: &Ctx, args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let dir = args.dir.as_ref().map_or_else(|| ctx.dataset.clone(), |d| ctx.resolve(d));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = ctx.stage_seed("synth");
    if args.segment_set.is_some() || args.segments_per_species.is_some() {
        let mut spec = args.segment_set.clone().unwrap_or_default();
        if let Some(n) = args.segments_per_species {
            spec.per_species = n;
        }
        let set = generate_segment_set(&spec, seed);
        let clouds: Vec<SegmentCloud> = set.iter().map(|s| s.cloud.clone()).collect();
        let labels: Vec<SegmentLabel> = set.iter().map(|s| s.label()).collect();
        let paths = [
            dir.join("segment_points.csv"),
            dir.join("footprints.csv"),
            dir.join("labels.csv"),
        ];
        files::write_points(&paths[0], &files::segment_rows(&clouds))?;
        files::write_footprints(&paths[1], &clouds)?;
        files::write_labels(&paths[2], &labels)?;
        log::info!("synthesized {} segments in {}", set.len(), dir.display());
        return Ok(paths.to_vec());
    }
    let mut spec = match (&args.spec, &args.forest) {
        (Some(p), _) => files::read_json::<ForestSpec>(&ctx.resolve(p))?,
        (None, Some(f)) => f.clone(),
        (None, None) => ForestSpec::default(),
    };
    if let Some(n) = args.n_trees {
        spec.n_trees = n;
    }
    if let Some(s) = args.min_spacing {
        spec.min_spacing = s;
    }
    if args.max_crown_radius.is_some() {
        spec.max_crown_radius = args.max_crown_radius;
    }
    let forest = generate_forest(&spec, seed)?;
    forest.write_dataset(&dir)?;
    log::info!(
        "synthesized {} trees, {} points in {}",
        forest.trees.len(),
        forest.points.len(),
        dir.display()
    );
    Ok(["points.csv", "labels.csv", "segments.grid", "trees.json"]
        .iter()
        .map(|n| dir.join(n))
        .collect())
}

// ---------------------------------------------------------------- convert

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertArgs {
    /// LAS 1.2 or canonical CSV inputs; repeat for one file per channel.
    #[arg(long = "input", required = false)]
    pub inputs: Vec<PathBuf>,
    /// Channel of each LAS input, in order (default 1, 2, 3).
    #[arg(long = "channel")]
    pub channels: Vec<u8>,
    /// Voxel side (m) for thinning; off by default.
    #[arg(long)]
    pub thin: Option<f64>,
    /// Also write `fused_points.csv` with per-channel reflectance columns.
    #[arg(long)]
    pub fused: bool,
    #[arg(long, default_value_t = DEFAULT_FUSION_RADIUS)]
    pub fusion_radius: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn convert(ctx: &Ctx, args: &ConvertArgs) -> Result<Vec<PathBuf>> {
    if args.inputs.is_empty() {
        bail!("convert needs at least one --input");
    }
    let mut rows: Vec<(u32, PointRecord)> = Vec::new();
    for (k, input) in args.inputs.iter().enumerate() {
        let path = ctx.resolve(input);
        let is_las = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("las"));
        if is_las {
            let channel = args.channels.get(k).copied().unwrap_or(k as u8 + 1);
            let points = las::read_las(&path, channel)?;
            rows.extend(points.into_iter().map(|p| (0, p)));
        } else {
            rows.extend(files::read_points(&path)?);
        }
    }
    if let Some(side) = args.thin {
        if !(side > 0.0) {
            bail!("voxel side must be positive, got {side}");
        }
        let pts: Vec<PointRecord> = rows.iter().map(|r| r.1).collect();
        let keep = voxel_thin_indices(&pts, side);
        rows = keep.into_iter().map(|i| rows[i]).collect();
    }
    let out = ctx.output(&args.output, "points.csv");
    files::write_points(&out, &rows)?;
    let mut written = vec![out];
    if args.fused {
        let pts: Vec<PointRecord> = rows.iter().map(|r| r.1).collect();
        let fused = fuse_channels(&pts, args.fusion_radius);
        let tagged: Vec<_> = rows.iter().map(|r| r.0).zip(fused).collect();
        let path = ctx.out_file("fused_points.csv");
        let mut w = files::create(&path)?;
        canopy_core::ingest::write_fused_points(&mut w, &tagged)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------- segment

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentArgs {
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Existing segment raster; skips tree-top detection and watershed.
    #[arg(long)]
    pub use_segments: Option<PathBuf>,
    /// Transfer reference labels (keyed by the input `segment_id` column) to
    /// the detected segments by majority vote of their points.
    #[arg(long)]
    pub transfer: bool,
    /// Reference labels for `--transfer` (default: dataset `labels.csv`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CSV of `x,y` roadside registry positions for crown classes.
    #[arg(long)]
    pub roadside: Option<PathBuf>,
    /// Render depth views of every segment at this resolution (pixels).
    #[arg(long)]
    pub depth_views: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub chm_cellsize: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dtm_cellsize: f64,
    #[arg(long, default_value_t = 2.0)]
    pub min_height: f64,
    #[arg(long, default_value_t = DEFAULT_FUSION_RADIUS)]
    pub fusion_radius: f64,
}

#[derive(Debug, Serialize)]
struct SegmentSummary {
    input_points: usize,
    ground_points: usize,
    vegetation_points: usize,
    noise_points: usize,
    treetops: usize,
    segments: usize,
    dropped_outside: usize,
    dropped_background: usize,
    labeled_segments: usize,
}

fn read_roadside(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(files::open(path)?).deserialize::<(f64, f64)>() {
        out.push(row.with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(out)
}

/// Position and height of the highest point of each segment.
fn crown_inputs(segments: &[SegmentCloud]) -> Vec<CrownInput> {
    segments
        .iter()
        .map(|s| {
            let top = s
                .points
                .iter()
                .map(|p| p.point)
                .max_by(|a, b| a.z.total_cmp(&b.z))
                .expect("extracted segments are non-empty");
            CrownInput {
                segment_id: s.segment_id,
                x: top.x,
                y: top.y,
                height: top.z.max(0.0),
            }
        })
        .collect()
}

pub fn segment(ctx: &Ctx, args: &SegmentArgs) -> Result<Vec<PathBuf>> {
    let points_path = ctx.input(&args.points, "points.csv")?;
    let rows = files::read_points(&points_path)?;
    let points: Vec<PointRecord> = rows.iter().map(|r| r.1).collect();
    let params = SegmentParams {
        chm_cellsize: args.chm_cellsize,
        dtm_cellsize: args.dtm_cellsize,
        min_height: args.min_height,
        fusion_radius: args.fusion_radius,
        ..SegmentParams::default()
    };
    let mut written = Vec::new();
    let (partition, dtm, vegetation, raster, extraction, treetops) = match &args.use_segments {
        None => {
            let run = segment_plot(&points, &params)?;
            let path = ctx.out_file("chm.grid");
            run.chm.grid().write(&path)?;
            written.push(path);
            (run.partition, run.dtm, run.vegetation, run.raster, run.extraction, Some(run.treetops))
        }
        Some(given) => {
            let grid = AsciiGrid::read(ctx.resolve(given))?;
            let raster = SegmentRaster::from_grid(grid)?;
            let (partition, dtm, vegetation) = normalize_plot(&points, &params)?;
            let fused = fuse_channels(&vegetation, params.fusion_radius);
            let extraction = extract_segments(&fused, &raster);
            (partition, dtm, vegetation, raster, extraction, None)
        }
    };
    let segments = &extraction.segments;

    for (name, grid) in [("dtm.grid", dtm.grid()), ("segments.grid", raster.grid())] {
        let path = ctx.out_file(name);
        grid.write(&path)?;
        written.push(path);
    }
    if let Some(tops) = &treetops {
        let path = ctx.out_file("treetops.csv");
        let mut w = csv::Writer::from_writer(files::create(&path)?);
        w.write_record(["segment_id", "x", "y", "height", "row", "col"])?;
        for (k, t) in tops.iter().enumerate() {
            w.write_record([
                (k + 1).to_string(),
                t.x.to_string(),
                t.y.to_string(),
                t.height.to_string(),
                t.row.to_string(),
                t.col.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    let geo = boundaries_to_geojson(&trace_boundaries(&raster), |_| None);
    let path = ctx.out_file("segments.geojson");
    files::write_json(&path, &geo)?;
    written.push(path);

    let path = ctx.out_file("segment_points.csv");
    files::write_points(&path, &files::segment_rows(segments))?;
    written.push(path);
    let path = ctx.out_file("footprints.csv");
    files::write_footprints(&path, segments)?;
    written.push(path);

    let registry = match &args.roadside {
        Some(p) => read_roadside(&ctx.resolve(p))?,
        None => Vec::new(),
    };
    let crowns = assign_crown_classes(&crown_inputs(segments), &registry, &CrownRules::default());
    let path = ctx.out_file("crown_classes.csv");
    let mut w = csv::Writer::from_writer(files::create(&path)?);
    w.write_record(["segment_id", "crown_class"])?;
    for (s, c) in segments.iter().zip(&crowns) {
        w.write_record([s.segment_id.to_string(), c.as_str().to_string()])?;
    }
    w.flush()?;
    written.push(path);

    let mut labeled = 0;
    if args.transfer {
        let ref_path = match &args.labels {
            Some(p) => ctx.resolve(p),
            None => first_existing(&[ctx.dataset.join("labels.csv")])?,
        };
        let reference: BTreeMap<u32, SegmentLabel> = files::read_labels(&ref_path)?
            .into_iter()
            .map(|l| (l.segment_id, l))
            .collect();
        let truth_ids: Vec<u32> = partition.vegetation.iter().map(|&i| rows[i].0).collect();
        let labels = transfer_labels(&raster, &vegetation, &truth_ids, &reference, segments, &crowns);
        labeled = labels.len();
        let path = ctx.out_file("labels.csv");
        files::write_labels(&path, &labels)?;
        written.push(path);
    }

    if let Some(res) = args.depth_views {
        let dir = ctx.out_file("depth");
        std::fs::create_dir_all(&dir)?;
        for s in segments {
            let views = render_depth_views(&s.points, res);
            written.extend(write_depth_views(&dir, s.segment_id, &views)?);
        }
    }

    let summary = SegmentSummary {
        input_points: points.len(),
        ground_points: partition.ground.len(),
        vegetation_points: partition.vegetation.len(),
        noise_points: partition.noise.len(),
        treetops: treetops.as_ref().map_or(0, Vec::len),
        segments: segments.len(),
        dropped_outside: extraction.dropped_outside,
        dropped_background: extraction.dropped_background,
        labeled_segments: labeled,
    };
    let path = ctx.out_file("segmentation.json");
    files::write_json(&path, &summary)?;
    written.push(path);
    log::info!("{} segments from {} points", segments.len(), points.len());
    Ok(written)
}

/// Each detected segment takes the label of the reference id that most of
/// its points carry (ties to the smaller id); reference id 0 never votes.
/// Segments without votes stay unlabeled. Crown classes come from the
/// detected geometry, the split is left unassigned.
pub fn transfer_labels(
    raster: &SegmentRaster,
    vegetation: &[PointRecord],
    truth_ids: &[u32],
    reference: &BTreeMap<u32, SegmentLabel>,
    segments: &[SegmentCloud],
    crowns: &[CrownClass],
) -> Vec<SegmentLabel> {
    let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (p, &truth) in vegetation.iter().zip(truth_ids) {
        if truth == 0 {
            continue;
        }
        if let Some(id) = raster.lookup(p.x, p.y).filter(|&id| id != 0) {
            *votes.entry(id).or_default().entry(truth).or_default() += 1;
        }
    }
    segments
        .iter()
        .zip(crowns)
        .filter_map(|(s, &crown_class)| {
            let tally = votes.get(&s.segment_id)?;
            let (winner, _) = tally
                .iter()
                .fold((0u32, 0usize), |best, (&t, &n)| if n > best.1 { (t, n) } else { best });
            let r = reference.get(&winner)?;
            Some(SegmentLabel {
                segment_id: s.segment_id,
                species: r.species,
                profile_category: r.profile_category,
                crown_class,
                split: Split::Unassigned,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- split

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Share of every class moved to the test split.
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn split(ctx: &Ctx, args: &SplitArgs) -> Result<Vec<PathBuf>> {
    let mut labels = files::read_labels(&ctx.input(&args.labels, "labels.csv")?)?;
    let species: Vec<Species> = labels.iter().map(|l| l.species).collect();
    let test = stratified_holdout(&species, args.test_fraction, ctx.stage_seed("split"))?;
    for (l, t) in labels.iter_mut().zip(test) {
        l.split = if t { Split::Test } else { Split::Train };
    }
    let out = ctx.output(&args.output, "labels.csv");
    files::write_labels(&out, &labels)?;
    Ok(vec![out])
}

// ---------------------------------------------------------------- featurize

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub footprints: Option<PathBuf>,
    /// Labels whose training split fits the schema (default: all segments).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Apply an existing schema instead of fitting one.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn load_segment_set(ctx: &Ctx, points: &Option<PathBuf>, footprints: &Option<PathBuf>) -> Result<Vec<SegmentCloud>> {
    files::load_segments(
        &ctx.input(points, "segment_points.csv")?,
        &ctx.input(footprints, "footprints.csv")?,
    )
}

pub fn featurize(ctx: &Ctx, args: &FeaturizeArgs) -> Result<Vec<PathBuf>> {
    let segments = load_segment_set(ctx, &args.segments, &args.footprints)?;
    let mut written = Vec::new();
    let schema = match &args.schema {
        Some(p) => {
            let path = ctx.resolve(p);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            FeatureSchema::from_json(&text)?
        }
        None => {
            let train_ids: BTreeSet<u32> = match ctx.optional_input(&args.labels, "labels.csv") {
                Some(p) => files::read_labels(&p)?
                    .into_iter()
                    .filter(|l| l.split == Split::Train)
                    .map(|l| l.segment_id)
                    .collect(),
                None => BTreeSet::new(),
            };
            let train: Vec<&SegmentCloud> = if train_ids.is_empty() {
                log::warn!("no training split found; fitting the feature schema on all segments");
                segments.iter().collect()
            } else {
                segments.iter().filter(|s| train_ids.contains(&s.segment_id)).collect()
            };
            let schema = fit_schema(&train)?;
            let path = ctx.out_file("schema.json");
            files::write_text(&path, &(schema.to_json() + "\n"))?;
            written.push(path);
            schema
        }
    };
    let table = FeatureTable {
        names: schema.names.clone(),
        segment_ids: segments.iter().map(|s| s.segment_id).collect(),
        rows: featurize_all(&segments, &schema)?,
    };
    let out = ctx.output(&args.output, "features.csv");
    table.write_csv(files::create(&out)?)?;
    written.push(out);
    Ok(written)
}

fn read_features(path: &Path) -> Result<FeatureTable> {
    FeatureTable::read_csv(files::open(path)?).with_context(|| format!("reading {}", path.display()))
}

// ---------------------------------------------------------------- train

/// Serialized model: the forest plus the feature columns it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_set: FeatureSetArg,
    pub columns: Vec<String>,
    pub forest: ForestModel,
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FeatureSetArg::All)]
    pub feature_set: FeatureSetArg,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn select_columns(table: &FeatureTable, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            table
                .names
                .iter()
                .position(|n| n == c)
                .with_context(|| format!("feature column {c:?} missing"))
        })
        .collect::<Result<_>>()?;
    Ok(table.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect())
}

/// Labels of the split to use: `wanted` if any label carries it, else all.
fn pick_split(labels: Vec<SegmentLabel>, wanted: Split) -> Vec<SegmentLabel> {
    if labels.iter().any(|l| l.split == wanted) {
        labels.into_iter().filter(|l| l.split == wanted).collect()
    } else {
        log::warn!("no {} split in the labels; using every labeled segment", wanted.as_str());
        labels
    }
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> Result<Vec<PathBuf>> {
    let table = read_features(&ctx.input(&args.features, "features.csv")?)?;
    let labels = pick_split(files::read_labels(&ctx.input(&args.labels, "labels.csv")?)?, Split::Train);
    let row_of: BTreeMap<u32, usize> = table.segment_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let columns: Vec<String> = FeatureSet::from(args.feature_set)
        .columns()
        .into_iter()
        .map(|c| table.names[c].clone())
        .collect();
    let all = select_columns(&table, &columns)?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for l in &labels {
        match row_of.get(&l.segment_id) {
            Some(&r) => {
                x.push(all[r].clone());
                y.push(l.species);
            }
            None => log::warn!("labeled segment {} has no feature row", l.segment_id),
        }
    }
    let forest = train_forest(&x, &y, &args.forest.params(), ctx.stage_seed("train"))?;
    let oob = oob_error(&forest, &x, &y)?;
    let model = TrainedModel {
        feature_set: args.feature_set,
        columns,
        forest,
    };
    let out = ctx.output(&args.output, "model.json");
    files::write_json(&out, &model)?;
    let oob_path = ctx.out_file("oob.json");
    files::write_json(&oob_path, &serde_json::json!({
        "n_train": x.len(),
        "error": if oob.error.is_finite() { Some(oob.error) } else { None },
        "evaluated": oob.evaluated,
        "excluded": oob.excluded,
    }))?;
    Ok(vec![out, oob_path])
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn predict(ctx: &Ctx, args: &PredictArgs) -> Result<Vec<PathBuf>> {
    let model: TrainedModel = files::read_json(&ctx.input(&args.model, "model.json")?)?;
    let table = read_features(&ctx.input(&args.features, "features.csv")?)?;
    let x = select_columns(&table, &model.columns)?;
    let preds = model.forest.predict_all(&x)?;
    let out = ctx.output(&args.output, "predictions.csv");
    write_predictions(files::create(&out)?, &table.segment_ids, &preds)?;
    Ok(vec![out])
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Bootstrap replicates for the confidence intervals (0 = none).
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Evaluate every labeled segment instead of the test split.
    #[arg(long)]
    pub all: bool,
    /// Skip the SVG bar chart.
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub n_evaluated: usize,
    pub n_missing_predictions: usize,
    pub report: MetricsReport,
    pub bootstrap: Option<BootstrapCi>,
}

pub fn evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let preds: BTreeMap<u32, Option<Species>> = read_predictions(files::open(
        &ctx.input(&args.predictions, "predictions.csv")?,
    )?)?
    .into_iter()
    .collect();
    let labels = files::read_labels(&ctx.input(&args.labels, "labels.csv")?)?;
    let labels = if args.all { labels } else { pick_split(labels, Split::Test) };
    if labels.is_empty() {
        bail!("no labeled segments to evaluate");
    }
    let refs: Vec<Species> = labels.iter().map(|l| l.species).collect();
    let p: Vec<Option<Species>> = labels
        .iter()
        .map(|l| preds.get(&l.segment_id).copied().flatten())
        .collect();
    let cm = confusion(&refs, &p)?;
    let report = metrics(&cm)?;
    let boot = if args.bootstrap > 0 {
        Some(bootstrap_ci(&refs, &p, args.bootstrap, args.level, ctx.stage_seed("bootstrap"))?)
    } else {
        None
    };
    let output = EvaluationOutput {
        n_evaluated: labels.len(),
        n_missing_predictions: p.iter().filter(|v| v.is_none()).count(),
        report: report.clone(),
        bootstrap: boot,
    };
    let mut written = Vec::new();
    let path = ctx.out_file("metrics.json");
    files::write_json(&path, &output)?;
    written.push(path);
    let path = ctx.out_file("metrics.csv");
    report.write_csv(files::create(&path)?)?;
    written.push(path);
    let path = ctx.out_file("confusion.csv");
    cm.write_csv(files::create(&path)?)?;
    written.push(path);
    let path = ctx.out_file("confusion_normalized.csv");
    cm.write_normalized_csv(files::create(&path)?)?;
    written.push(path);

    let mut parts: BTreeMap<&str, BTreeMap<String, BreakdownEntry>> = BTreeMap::new();
    for (key, by) in [
        ("profile_category", BreakdownBy::ProfileCategory),
        ("crown_class", BreakdownBy::CrownClass),
        ("species", BreakdownBy::Species),
    ] {
        parts.insert(key, breakdown(&labels, &p, by)?);
    }
    let path = ctx.out_file("breakdown.json");
    files::write_json(&path, &parts)?;
    written.push(path);

    if !args.no_plots {
        let present: Vec<_> = report.per_class.iter().filter(|c| c.support > 0).collect();
        let names: Vec<String> = present.iter().map(|c| c.species.name().to_string()).collect();
        let recalls: Vec<f64> = present.iter().map(|c| c.recall).collect();
        let svg = plot::bar_svg(&names, &recalls, "Per-class accuracy", "producer's accuracy");
        let path = ctx.out_file("per_class_accuracy.svg");
        files::write_text(&path, &svg)?;
        written.push(path);
    }
    log::info!(
        "OA {:.4}, macro {:.4} on {} segments",
        report.overall_accuracy,
        report.macro_average_accuracy,
        labels.len()
    );
    Ok(written)
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub footprints: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Training sizes (sweep-size) or point densities per m² (sweep-density).
    #[arg(long, value_delimiter = ',', visible_aliases = ["sizes", "densities"])]
    #[serde(alias = "sizes", alias = "densities")]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = FeatureSetArg::All)]
    pub feature_set: FeatureSetArg,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub const DEFAULT_SIZES: [f64; 4] = [250.0, 500.0, 1000.0, 2000.0];
pub const DEFAULT_DENSITIES: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];

/// Labeled segments with their species, in segment order.
fn labeled_segments(ctx: &Ctx, args: &SweepArgs) -> Result<(Vec<SegmentCloud>, Vec<Species>)> {
    let segments = load_segment_set(ctx, &args.segments, &args.footprints)?;
    let labels: BTreeMap<u32, Species> = files::read_labels(&ctx.input(&args.labels, "labels.csv")?)?
        .into_iter()
        .map(|l| (l.segment_id, l.species))
        .collect();
    let (clouds, species) = segments
        .into_iter()
        .filter_map(|s| labels.get(&s.segment_id).map(|&sp| (s, sp)))
        .unzip();
    Ok((clouds, species))
}

fn write_sweep(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = files::create(path)?;
    result.write_csv(&mut w)?;
    Ok(())
}

pub fn sweep_size(ctx: &Ctx, args: &SweepArgs) -> Result<Vec<PathBuf>> {
    let (segments, species) = labeled_segments(ctx, args)?;
    let sizes = if args.values.is_empty() { DEFAULT_SIZES.to_vec() } else { args.values.clone() };
    let trainer = SegmentForestTrainer {
        segments: &segments,
        labels: &species,
        params: args.forest.params(),
        feature_set: args.feature_set.into(),
    };
    let result = sweep_training_size(&species, &sizes, args.folds, &trainer, ctx.stage_seed("sweep-size"))?;
    let out = ctx.output(&args.output, "sweep_size.csv");
    write_sweep(&out, &result)?;
    Ok(vec![out])
}

pub fn sweep_density_stage(ctx: &Ctx, args: &SweepArgs) -> Result<Vec<PathBuf>> {
    let (segments, species) = labeled_segments(ctx, args)?;
    let densities = if args.values.is_empty() { DEFAULT_DENSITIES.to_vec() } else { args.values.clone() };
    let params = args.forest.params();
    let feature_set: FeatureSet = args.feature_set.into();
    let species_ref = &species;
    let result = sweep_density(
        &segments,
        &species,
        &densities,
        args.folds,
        |subs: &[SegmentCloud]| {
            // The trainer borrows the subsampled set, which lives only for this
            // call; an owned copy keeps it alive for the cross-validation.
            Ok(OwnedTrainer {
                segments: subs.to_vec(),
                labels: species_ref.clone(),
                params,
                feature_set,
            })
        },
        ctx.stage_seed("sweep-density"),
    )?;
    let out = ctx.output(&args.output, "sweep_density.csv");
    write_sweep(&out, &result)?;
    Ok(vec![out])
}

struct OwnedTrainer {
    segments: Vec<SegmentCloud>,
    labels: Vec<Species>,
    params: ForestParams,
    feature_set: FeatureSet,
}

impl canopy_core::scaling::Trainer for OwnedTrainer {
    fn fit_predict(&self, train: &[usize], test: &[usize], seed: RngSeed) -> Result<Vec<Option<Species>>, String> {
        SegmentForestTrainer {
            segments: &self.segments,
            labels: &self.labels,
            params: self.params,
            feature_set: self.feature_set,
        }
        .fit_predict(train, test, seed)
    }
}

// ---------------------------------------------------------------- fit-scaling

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKindArg {
    Overall,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitScalingArgs {
    /// Sweep CSV (default `sweep_size.csv`).
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub x_min: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Target errors to extrapolate the required x for.
    #[arg(long, value_delimiter = ',')]
    pub target: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extrapolation {
    pub kind: ErrorKindArg,
    pub target: f64,
    pub x: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub sweep: String,
    pub overall: Option<PowerLawFit>,
    pub r#macro: Option<PowerLawFit>,
    pub extrapolations: Vec<Extrapolation>,
}

pub fn fit_scaling(ctx: &Ctx, args: &FitScalingArgs) -> Result<Vec<PathBuf>> {
    let sweep_path = ctx.input(&args.sweep, "sweep_size.csv")?;
    let sweep = SweepResult::read_csv(files::open(&sweep_path)?)?;
    let range = match (args.x_min, args.x_max) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(0.0), hi.unwrap_or(f64::INFINITY))),
    };
    let fit = |kind| match fit_sweep(&sweep, kind, range) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("{kind:?} fit failed: {e}");
            None
        }
    };
    let (overall, macro_fit) = (fit(ErrorKind::Overall), fit(ErrorKind::Macro));
    let targets = if args.target.is_empty() { vec![0.10] } else { args.target.clone() };
    let mut extrapolations = Vec::new();
    for (kind, f) in [(ErrorKindArg::Overall, overall), (ErrorKindArg::Macro, macro_fit)] {
        for &target in &targets {
            let (x, note) = match f.map(|f| extrapolate_m(&f, target)) {
                None => (None, Some("no fit".to_string())),
                Some(Ok(x)) => (Some(x), None),
                Some(Err(e)) => (None, Some(e.to_string())),
            };
            extrapolations.push(Extrapolation { kind, target, x, note });
        }
    }
    let stem = sweep_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep")
        .trim_start_matches("sweep_")
        .to_string();
    let result = ScalingFit {
        sweep: sweep_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        overall,
        r#macro: macro_fit,
        extrapolations,
    };
    let out = ctx.output(&args.output, &format!("fit_{stem}.json"));
    files::write_json(&out, &result)?;
    let series = vec![
        ("overall", sweep.points.iter().map(|p| (p.x, p.overall_error)).collect::<Vec<_>>()),
        ("macro", sweep.points.iter().map(|p| (p.x, p.macro_error)).collect()),
    ];
    let fits: Vec<(&str, PowerLawFit)> = [("overall", overall), ("macro", macro_fit)]
        .into_iter()
        .filter_map(|(n, f)| f.map(|f| (n, f)))
        .collect();
    let xlabel = if stem == "density" { "points per m²" } else { "training samples" };
    let svg = plot::loglog_svg(&series, &fits, &format!("Error vs {xlabel}"), xlabel, "error");
    let svg_path = out.with_extension("svg");
    files::write_text(&svg_path, &svg)?;
    Ok(vec![out, svg_path])
}

defaults_from_clap!(
    ForestArgs,
    SynthArgs,
    ConvertArgs,
    SegmentArgs,
    SplitArgs,
    FeaturizeArgs,
    TrainArgs,
    PredictArgs,
    EvaluateArgs,
    SweepArgs,
    FitScalingArgs,
);

#[cfg(test)]
mod tests {
    use super::*;
    use canopy_core::model::ProfileCategory;
    use canopy_core::grid::GridGeometry;

    #[test]
    fn defaults_match_clap() {
        let f = ForestArgs::default();
        assert_eq!(f.trees, 500);
        assert_eq!(f.params(), ForestParams::default());
        assert_eq!(EvaluateArgs::default().bootstrap, 2000);
        let s: SegmentArgs = serde_json::from_str("{}").unwrap();
        assert_eq!(s, SegmentArgs::default());
        assert!(serde_json::from_str::<SplitArgs>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn forest_args_nested_in_json() {
        let t: TrainArgs = serde_json::from_str(r#"{"forest": {"trees": 7}, "feature_set": "geometry_only"}"#).unwrap();
        assert_eq!(t.forest.trees, 7);
        assert_eq!(t.forest.min_per_class, 125);
        assert_eq!(t.feature_set, FeatureSetArg::GeometryOnly);
    }

    fn label(id: u32, species: Species) -> SegmentLabel {
        SegmentLabel {
            segment_id: id,
            species,
            profile_category: ProfileCategory::SingleTree,
            crown_class: CrownClass::Unassigned,
            split: Split::Train,
        }
    }

    fn pt(x: f64, y: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            z: 5.0,
            channel: 1,
            reflectance: -10.0,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        }
    }

    #[test]
    fn majority_vote_transfer() {
        // Two detected segments side by side, 1 m cells.
        let geo = GridGeometry {
            ncols: 2,
            nrows: 1,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 1.0,
        };
        let mut grid = AsciiGrid::filled(geo, 0.0, -9999.0);
        grid.set(0, 0, 1.0);
        grid.set(0, 1, 2.0);
        let raster = SegmentRaster::from_grid(grid).unwrap();
        let veg = vec![pt(0.5, 0.5), pt(0.4, 0.5), pt(0.3, 0.5), pt(1.5, 0.5), pt(1.6, 0.5)];
        // Segment 1: truth 7 twice, truth 3 once. Segment 2: a 4/5 tie, smaller wins.
        let truth = vec![7, 3, 7, 5, 4];
        let reference: BTreeMap<u32, SegmentLabel> = [
            (3, label(3, Species::Oak)),
            (4, label(4, Species::Birch)),
            (5, label(5, Species::Pine)),
            (7, label(7, Species::Spruce)),
        ]
        .into_iter()
        .collect();
        let segs: Vec<SegmentCloud> = [1u32, 2]
            .iter()
            .map(|&id| SegmentCloud::new(id, vec![canopy_core::FusedPoint::unfused(pt(0.0, 0.0))], 1.0))
            .collect();
        let crowns = [CrownClass::Dominant, CrownClass::Isolated];
        let out = transfer_labels(&raster, &veg, &truth, &reference, &segs, &crowns);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].species, Species::Spruce);
        assert_eq!(out[0].crown_class, CrownClass::Dominant);
        assert_eq!(out[0].split, Split::Unassigned);
        assert_eq!(out[1].species, Species::Birch);
    }
}
