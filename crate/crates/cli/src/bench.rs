//! Wall-clock runtimes of the main stages at several thread counts. Warm-up
//! runs are excluded; training and inference are timed separately.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;
use serde::{Deserialize, Serialize};

use canopy_core::classify::{train_forest, ForestParams};
use canopy_core::exec;
use canopy_core::features::{featurize_all, fit_schema};
use canopy_core::segmentation::{segment_plot, SegmentParams};
use canopy_core::synth::{generate_forest, generate_segment_set, ForestSpec, SegmentSetSpec};
use canopy_core::{SegmentCloud, Species};

use crate::files;
use crate::stages::Ctx;

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchArgs {
    /// Trees in the synthetic plot used for segmentation.
    #[arg(long, default_value_t = 50)]
    pub plot_trees: usize,
    /// Synthetic segments per species used for featurization and the forest.
    #[arg(long, default_value_t = 60)]
    pub per_species: usize,
    #[arg(long, default_value_t = 100)]
    pub forest_trees: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Thread counts to compare; 0 is the default pool.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 0])]
    pub threads: Vec<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self::parse_from(["canopy"])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub stage: String,
    pub threads: usize,
    pub seconds: Vec<f64>,
    pub median: f64,
}

fn time_runs(warmup: usize, repeats: usize, mut f: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmup {
        f();
    }
    (0..repeats.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn bench(ctx: &Ctx, args: &BenchArgs) -> Result<Vec<PathBuf>> {
    let forest = generate_forest(
        &ForestSpec {
            n_trees: args.plot_trees,
            ..ForestSpec::default()
        },
        ctx.seed.derive_tagged("bench-plot", 0),
    )?;
    let set = generate_segment_set(
        &SegmentSetSpec {
            per_species: args.per_species,
            ..SegmentSetSpec::default()
        },
        ctx.seed.derive_tagged("bench-set", 0),
    );
    let clouds: Vec<SegmentCloud> = set.iter().map(|s| s.cloud.clone()).collect();
    let y: Vec<Species> = set.iter().map(|s| s.species).collect();
    let schema = fit_schema(&clouds)?;
    let x = featurize_all(&clouds, &schema)?;
    let params = ForestParams {
        n_trees: args.forest_trees,
        ..ForestParams::default()
    };
    let model = train_forest(&x, &y, &params, ctx.seed)?;

    let mut results = Vec::new();
    for &t in &args.threads {
        let label = if t == 0 { exec::current_threads() } else { t };
        let mut record = |stage: &str, seconds: Vec<f64>| {
            log::info!("{stage} on {label} threads: median {:.4} s", median(&seconds));
            results.push(BenchResult {
                stage: stage.into(),
                threads: label,
                median: median(&seconds),
                seconds,
            });
        };
        let secs = exec::with_threads(t, || {
            time_runs(args.warmup, args.repeats, || {
                segment_plot(&forest.points, &SegmentParams::default()).expect("segmentation runs");
            })
        });
        record("segment", secs);
        let secs = exec::with_threads(t, || {
            time_runs(args.warmup, args.repeats, || {
                featurize_all(&clouds, &schema).expect("featurization runs");
            })
        });
        record("featurize", secs);
        let secs = exec::with_threads(t, || {
            time_runs(args.warmup, args.repeats, || {
                train_forest(&x, &y, &params, ctx.seed).expect("training runs");
            })
        });
        record("train", secs);
        let secs = exec::with_threads(t, || {
            time_runs(args.warmup, args.repeats, || {
                model.predict_all(&x).expect("prediction runs");
            })
        });
        record("predict", secs);
    }
    let out = args.output.as_ref().map_or_else(|| ctx.out_file("bench.json"), |p| ctx.resolve(p));
    files::write_json(
        &out,
        &serde_json::json!({
            "parallel_build": exec::is_parallel(),
            "available_threads": exec::current_threads(),
            "plot_points": forest.points.len(),
            "segments": clouds.len(),
            "results": results,
        }),
    )?;
    Ok(vec![out])
}
