//! Plot to prediction on a small synthetic forest, run at one thread and on
//! the default pool.

use canopy_core::classify::{train_forest, ForestParams};
use canopy_core::evaluate::{confusion, metrics};
use canopy_core::exec;
use canopy_core::features::{featurize_all, fit_schema, FeatureSchema};
use canopy_core::segmentation::{segment_plot, SegmentParams};
use canopy_core::synth::{generate_forest, ForestSpec};
use canopy_core::{RngSeed, Species};

struct Outcome {
    treetops: usize,
    segments: usize,
    features: Vec<Vec<f64>>,
    predictions: Vec<Species>,
}

fn run(threads: usize) -> Outcome {
    exec::with_threads(threads, || {
        let spec = ForestSpec {
            n_trees: 30,
            min_spacing: 4.0,
            max_crown_radius: Some(2.0),
            ..ForestSpec::default()
        };
        let forest = generate_forest(&spec, RngSeed(5)).unwrap();
        let params = SegmentParams {
            extent: Some(forest.truth_segments.grid().geometry()),
            ..SegmentParams::default()
        };
        let seg = segment_plot(&forest.points, &params).unwrap();
        let clouds = &seg.extraction.segments;
        let schema: FeatureSchema = fit_schema(clouds).unwrap();
        let features = featurize_all(clouds, &schema).unwrap();
        let y: Vec<Species> = (0..clouds.len()).map(|i| Species::ALL[i % 3]).collect();
        let params = ForestParams {
            n_trees: 25,
            ..ForestParams::default()
        };
        let model = train_forest(&features, &y, &params, RngSeed(6)).unwrap();
        let predictions = model.predict_all(&features).unwrap().into_iter().map(|p| p.species).collect();
        Outcome {
            treetops: seg.treetops.len(),
            segments: clouds.len(),
            features,
            predictions,
        }
    })
}

#[test]
fn synthetic_plot_is_segmented_and_classified() {
    let out = run(0);
    assert!((27..=33).contains(&out.treetops), "{} tops for 30 trees", out.treetops);
    assert_eq!(out.features.len(), out.segments);
    assert!(out.features.iter().flatten().all(|v| v.is_finite()));
    let refs: Vec<Species> = (0..out.segments).map(|i| Species::ALL[i % 3]).collect();
    let preds: Vec<Option<Species>> = out.predictions.iter().copied().map(Some).collect();
    // Resubstitution of a fully grown forest.
    let report = metrics(&confusion(&refs, &preds).unwrap()).unwrap();
    assert!(report.overall_accuracy > 0.9, "{}", report.overall_accuracy);
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (run(1), run(0));
    assert_eq!(a.treetops, b.treetops);
    assert_eq!(a.predictions, b.predictions);
    for (x, y) in a.features.iter().zip(&b.features) {
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
