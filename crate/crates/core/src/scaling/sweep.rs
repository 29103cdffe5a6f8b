use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::folds::{nested_subsample, stratified_kfold, FoldAssignment};
use super::ScalingError;
use crate::evaluate::{confusion, metrics};
use crate::exec;
use crate::ingest::subsample_to_density;
use crate::model::{RngSeed, SegmentCloud, Species};

/// Fits a model on the `train` sample indices and predicts the `test` ones.
pub trait Trainer: Sync {
    fn fit_predict(
        &self,
        train: &[usize],
        test: &[usize],
        seed: RngSeed,
    ) -> Result<Vec<Option<Species>>, String>;
}

/// Adapts a closure to [`Trainer`].
pub struct FnTrainer<F>(pub F);

impl<F> Trainer for FnTrainer<F>
where
    F: Fn(&[usize], &[usize], RngSeed) -> Result<Vec<Option<Species>>, String> + Sync,
{
    fn fit_predict(
        &self,
        train: &[usize],
        test: &[usize],
        seed: RngSeed,
    ) -> Result<Vec<Option<Species>>, String> {
        (self.0)(train, test, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    /// Fold-mean overall error (1 − OA).
    pub overall_error: f64,
    /// Fold-mean macro error (1 − macro-average accuracy).
    pub macro_error: f64,
    pub fold_overall: Vec<f64>,
    pub fold_macro: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

fn fold_errors(
    folds: &FoldAssignment,
    fold: usize,
    labels: &[Species],
    trainer: &dyn Trainer,
    seed: RngSeed,
) -> Result<(f64, f64), String> {
    let train = folds.train_indices(fold);
    let test = folds.test_indices(fold);
    let preds = trainer.fit_predict(&train, &test, seed.derive_tagged("cv", fold as u64))?;
    let refs: Vec<Species> = test.iter().map(|&i| labels[i]).collect();
    let cm = confusion(&refs, &preds).map_err(|e| e.to_string())?;
    let m = metrics(&cm).map_err(|e| e.to_string())?;
    Ok((1.0 - m.overall_accuracy, 1.0 - m.macro_average_accuracy))
}

fn point(x: f64, errs: Vec<(f64, f64)>) -> SweepPoint {
    let k = errs.len() as f64;
    let fold_overall: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let fold_macro: Vec<f64> = errs.iter().map(|e| e.1).collect();
    SweepPoint {
        x,
        overall_error: fold_overall.iter().sum::<f64>() / k,
        macro_error: fold_macro.iter().sum::<f64>() / k,
        fold_overall,
        fold_macro,
    }
}

/// Plain k-fold cross-validation over the members of `folds`; returns one
/// (overall, macro) error pair per fold.
pub fn cross_validate(
    folds: &FoldAssignment,
    labels: &[Species],
    trainer: &dyn Trainer,
    seed: RngSeed,
) -> Result<Vec<(f64, f64)>, ScalingError> {
    exec::try_map_range(folds.k, |f| {
        fold_errors(folds, f, labels, trainer, seed).map_err(|msg| ScalingError::Trainer {
            x: f64::NAN,
            fold: f,
            msg,
        })
    })
}

fn sorted_positive(xs: &[f64]) -> Result<Vec<f64>, ScalingError> {
    if let Some(bad) = xs.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(ScalingError::InvalidSweep(bad.to_string()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Error versus training-set size. For each size m the folds are nested-
/// subsampled by m·k / ((k − 1)·N) (capped at 1), so that each training
/// split holds about m samples, and then cross-validated.
pub fn sweep_training_size(
    labels: &[Species],
    sizes: &[f64],
    k: usize,
    trainer: &dyn Trainer,
    seed: RngSeed,
) -> Result<SweepResult, ScalingError> {
    let sizes = sorted_positive(sizes)?;
    let folds = stratified_kfold(labels, k, seed.derive_tagged("folds", 0))?;
    let n = labels.len() as f64;
    let subsets = sizes
        .iter()
        .map(|&m| {
            let fraction = (m * k as f64 / ((k - 1) as f64 * n)).min(1.0);
            nested_subsample(&folds, labels, fraction, seed.derive_tagged("subsample", 0))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs = exec::try_map_range(sizes.len() * k, |j| {
        let (p, f) = (j / k, j % k);
        fold_errors(&subsets[p], f, labels, trainer, seed).map_err(|msg| ScalingError::Trainer {
            x: sizes[p],
            fold: f,
            msg,
        })
    })?;
    Ok(SweepResult {
        points: sizes
            .iter()
            .enumerate()
            .map(|(p, &x)| point(x, jobs[p * k..(p + 1) * k].to_vec()))
            .collect(),
    })
}

/// Error versus point density. Every segment is subsampled to each density
/// (same per-segment seed at every density) and the trainer built by
/// `make_trainer` on the subsampled segments is cross-validated on fixed
/// folds.
pub fn sweep_density<T, M>(
    segments: &[SegmentCloud],
    labels: &[Species],
    densities: &[f64],
    k: usize,
    make_trainer: M,
    seed: RngSeed,
) -> Result<SweepResult, ScalingError>
where
    T: Trainer,
    M: Fn(&[SegmentCloud]) -> Result<T, String>,
{
    let densities = sorted_positive(densities)?;
    let folds = stratified_kfold(labels, k, seed.derive_tagged("folds", 0))?;
    let mut points = Vec::with_capacity(densities.len());
    for &d in &densities {
        let subs = exec::map_range(segments.len(), |i| {
            subsample_to_density(&segments[i], d, seed.derive_tagged("density", i as u64))
        });
        let trainer = make_trainer(&subs).map_err(|msg| ScalingError::Trainer {
            x: d,
            fold: 0,
            msg,
        })?;
        let errs = cross_validate(&folds, labels, &trainer, seed).map_err(|e| match e {
            ScalingError::Trainer { fold, msg, .. } => ScalingError::Trainer { x: d, fold, msg },
            other => other,
        })?;
        points.push(point(d, errs));
    }
    Ok(SweepResult { points })
}

impl SweepResult {
    /// Writes `x,fold,overall_error,macro_error`, one row per fold.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScalingError> {
        let err = |e: csv::Error| ScalingError::Output(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "fold", "overall_error", "macro_error"]).map_err(err)?;
        for p in &self.points {
            for (f, (o, m)) in p.fold_overall.iter().zip(&p.fold_macro).enumerate() {
                w.write_record([p.x.to_string(), f.to_string(), o.to_string(), m.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| ScalingError::Output(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ScalingError> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            fold: usize,
            overall_error: f64,
            macro_error: f64,
        }
        let mut by_x: BTreeMap<u64, (f64, Vec<(usize, f64, f64)>)> = BTreeMap::new();
        for row in csv::Reader::from_reader(input).deserialize::<Row>() {
            let r = row.map_err(|e| ScalingError::Output(e.to_string()))?;
            if !(r.x > 0.0) {
                return Err(ScalingError::InvalidSweep(r.x.to_string()));
            }
            // Positive floats order like their bit patterns.
            by_x.entry(r.x.to_bits())
                .or_insert((r.x, Vec::new()))
                .1
                .push((r.fold, r.overall_error, r.macro_error));
        }
        let points = by_x
            .into_values()
            .map(|(x, mut rows)| {
                rows.sort_by_key(|r| r.0);
                point(x, rows.iter().map(|r| (r.1, r.2)).collect())
            })
            .collect();
        Ok(Self { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<Species> {
        (0..n)
            .map(|i| if i % 4 == 0 { Species::Oak } else { Species::Pine })
            .collect()
    }

    #[test]
    fn majority_trainer_constant_error() {
        let y = labels(400);
        let majority = FnTrainer(|_: &[usize], test: &[usize], _| Ok(vec![Some(Species::Pine); test.len()]));
        let r = sweep_training_size(&y, &[50.0, 100.0, 320.0], 5, &majority, RngSeed(1)).unwrap();
        for p in &r.points {
            // Per-cell ceil rounding: at m = 50 a test fold keeps 4 oak + 10 pine.
            assert!((p.overall_error - 0.25).abs() < 0.04, "{p:?}");
            assert!((p.macro_error - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn full_size_equals_plain_cv() {
        let y = labels(200);
        let t = FnTrainer(|train: &[usize], test: &[usize], _| {
            Ok(test
                .iter()
                .map(|&i| Some(if (i + train.len()) % 3 == 0 { Species::Oak } else { Species::Pine }))
                .collect())
        });
        let seed = RngSeed(3);
        let r = sweep_training_size(&y, &[1e9], 5, &t, seed).unwrap();
        let folds = stratified_kfold(&y, 5, seed.derive_tagged("folds", 0)).unwrap();
        let cv = cross_validate(&folds, &y, &t, seed).unwrap();
        assert_eq!(r.points[0].fold_overall, cv.iter().map(|e| e.0).collect::<Vec<_>>());
    }

    #[test]
    fn training_sizes_near_target() {
        let y = labels(1000);
        let seen = std::sync::Mutex::new(Vec::new());
        let t = FnTrainer(|train: &[usize], test: &[usize], _| {
            seen.lock().unwrap().push(train.len());
            Ok(vec![None; test.len()])
        });
        sweep_training_size(&y, &[200.0], 5, &t, RngSeed(1)).unwrap();
        for &n in seen.lock().unwrap().iter() {
            assert!((195..=210).contains(&n), "{n}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = SweepResult {
            points: vec![point(250.0, vec![(0.2, 0.3), (0.1, 0.2)]), point(500.0, vec![(0.1, 0.1), (0.1, 0.1)])],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("x,fold,overall_error,macro_error\n250,0,0.2,0.3\n"));
        assert_eq!(SweepResult::read_csv(buf.as_slice()).unwrap(), r);
    }
}
