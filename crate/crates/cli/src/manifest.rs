//! Experiment manifests: a JSON list of stages run in order against one
//! output directory, with per-stage wall-clock timing and a provenance
//! record of every artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use canopy_core::exec;

use crate::files;
use crate::report::{report, ReportArgs};
use crate::stages::{self, *};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    /// Relative to the manifest file.
    pub output_dir: PathBuf,
    /// Dataset directory (default `<output_dir>/dataset`).
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Stage {
    Synth(SynthArgs),
    Convert(ConvertArgs),
    Segment(SegmentArgs),
    Split(SplitArgs),
    Featurize(FeaturizeArgs),
    Train(TrainArgs),
    Predict(PredictArgs),
    Evaluate(EvaluateArgs),
    SweepSize(SweepArgs),
    SweepDensity(SweepArgs),
    FitScaling(FitScalingArgs),
    Report(ReportArgs),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth(_) => "synth",
            Stage::Convert(_) => "convert",
            Stage::Segment(_) => "segment",
            Stage::Split(_) => "split",
            Stage::Featurize(_) => "featurize",
            Stage::Train(_) => "train",
            Stage::Predict(_) => "predict",
            Stage::Evaluate(_) => "evaluate",
            Stage::SweepSize(_) => "sweep-size",
            Stage::SweepDensity(_) => "sweep-density",
            Stage::FitScaling(_) => "fit-scaling",
            Stage::Report(_) => "report",
        }
    }

    pub fn run(&self, ctx: &Ctx) -> Result<Vec<PathBuf>> {
        match self {
            Stage::Synth(a) => stages::synth(ctx, a),
            Stage::Convert(a) => stages::convert(ctx, a),
            Stage::Segment(a) => stages::segment(ctx, a),
            Stage::Split(a) => stages::split(ctx, a),
            Stage::Featurize(a) => stages::featurize(ctx, a),
            Stage::Train(a) => stages::train(ctx, a),
            Stage::Predict(a) => stages::predict(ctx, a),
            Stage::Evaluate(a) => stages::evaluate(ctx, a),
            Stage::SweepSize(a) => stages::sweep_size(ctx, a),
            Stage::SweepDensity(a) => stages::sweep_density_stage(ctx, a),
            Stage::FitScaling(a) => stages::fit_scaling(ctx, a),
            Stage::Report(a) => report(ctx, a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProvenance {
    pub stage: String,
    pub artifacts: Vec<Artifact>,
}

/// Written to `provenance.json`; contains nothing run-dependent, so a rerun
/// reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: Option<String>,
    pub manifest_sha256: String,
    pub seed: u64,
    pub stages: Vec<StageProvenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub out: PathBuf,
    pub provenance: Provenance,
    pub timings: Vec<StageTiming>,
}

pub const PROVENANCE_FILE: &str = "provenance.json";
pub const TIMINGS_FILE: &str = "timings.json";

pub fn parse_manifest(text: &str) -> Result<ExperimentManifest> {
    let m: ExperimentManifest = serde_json::from_str(text).context("invalid manifest")?;
    if m.stages.is_empty() {
        anyhow::bail!("invalid manifest: no stages");
    }
    Ok(m)
}

fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Runs every stage of the manifest at `path` in order. `out_override`
/// replaces the manifest's output directory.
pub fn run_manifest(path: &Path, out_override: Option<&Path>) -> Result<RunSummary> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).context("manifest is not UTF-8")?;
    let manifest = parse_manifest(&text)?;
    let hash = files::sha256_hex(&bytes);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = out_override.map_or_else(|| base.join(&manifest.output_dir), Path::to_path_buf);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let prov_path = out.join(PROVENANCE_FILE);
    if prov_path.exists() {
        match files::read_json::<Provenance>(&prov_path) {
            Ok(old) if old.manifest_sha256 != hash || old.seed != manifest.seed => log::warn!(
                "{} was produced by a different manifest or seed (sha256 {}, seed {}); outputs will be replaced",
                out.display(),
                old.manifest_sha256,
                old.seed
            ),
            Ok(_) => {}
            Err(e) => log::warn!("unreadable {}: {e:#}", prov_path.display()),
        }
    }
    if let Some(j) = manifest.jobs {
        exec::configure_global_threads(j);
    }
    let mut ctx = Ctx::new(&out, manifest.seed);
    ctx.base = base.clone();
    if let Some(d) = &manifest.dataset {
        ctx.dataset = base.join(d);
    }
    files::write_text(&out.join("manifest.json"), &text)?;

    let mut provenance = Provenance {
        name: manifest.name.clone(),
        manifest_sha256: hash,
        seed: manifest.seed,
        stages: Vec::new(),
    };
    let mut timings = Vec::new();
    for (i, stage) in manifest.stages.iter().enumerate() {
        log::info!("stage {} of {}: {}", i + 1, manifest.stages.len(), stage.name());
        let t0 = Instant::now();
        let written = stage
            .run(&ctx)
            .with_context(|| format!("stage {} ({}) failed", i + 1, stage.name()))?;
        timings.push(StageTiming {
            stage: stage.name().to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        let artifacts = written
            .iter()
            .map(|p| {
                Ok(Artifact {
                    path: relative(&out, p),
                    sha256: files::sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        provenance.stages.push(StageProvenance {
            stage: stage.name().to_string(),
            artifacts,
        });
    }
    files::write_json(&prov_path, &provenance)?;
    files::write_json(
        &out.join(TIMINGS_FILE),
        &serde_json::json!({
            "threads": exec::current_threads(),
            "stages": timings,
            "total_seconds": timings.iter().map(|t| t.seconds).sum::<f64>(),
        }),
    )?;
    Ok(RunSummary {
        out,
        provenance,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_stage_list() {
        let m = parse_manifest(
            r#"{"seed": 3, "output_dir": "out", "stages": [
                {"stage": "synth", "n_trees": 5},
                {"stage": "segment", "transfer": true},
                {"stage": "train", "forest": {"trees": 10}},
                {"stage": "sweep-size", "sizes": [10, 20]},
                {"stage": "report"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(m.stages.len(), 5);
        assert_eq!(m.stages[3].name(), "sweep-size");
        match &m.stages[2] {
            Stage::Train(t) => assert_eq!(t.forest.trees, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        for bad in [
            r#"{"seed": 1, "output_dir": "o", "stages": [{"stage": "report"}], "extra": 1}"#,
            r#"{"seed": 1, "output_dir": "o", "stages": [{"stage": "segment", "min_hieght": 3}]}"#,
            r#"{"seed": 1, "output_dir": "o", "stages": [{"stage": "explode"}]}"#,
            r#"{"seed": 1, "output_dir": "o", "stages": []}"#,
            r#"{"output_dir": "o", "stages": [{"stage": "report"}]}"#,
        ] {
            assert!(parse_manifest(bad).is_err(), "{bad}");
        }
    }
}
