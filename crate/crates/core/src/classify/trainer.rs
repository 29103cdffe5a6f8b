use super::{train_forest, ForestParams};
use crate::features::{featurize_all, fit_schema, FeatureSet};
use crate::model::{RngSeed, SegmentCloud, Species};
use crate::scaling::Trainer;

/// Random forest on segment features, refitting the feature schema on every
/// training split so held-out segments never shape the histogram ranges or
/// imputation medians.
#[derive(Debug, Clone, Copy)]
pub struct SegmentForestTrainer<'a> {
    pub segments: &'a [SegmentCloud],
    pub labels: &'a [Species],
    pub params: ForestParams,
    pub feature_set: FeatureSet,
}

impl SegmentForestTrainer<'_> {
    /// Feature rows of `train` and `test` under a schema fitted on `train`.
    pub fn features(
        &self,
        train: &[usize],
        test: &[usize],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), String> {
        let pick = |idx: &[usize]| idx.iter().map(|&i| &self.segments[i]).collect::<Vec<_>>();
        let (tr, te) = (pick(train), pick(test));
        let schema = fit_schema(&tr).map_err(|e| e.to_string())?;
        let xtr = featurize_all(&tr, &schema).map_err(|e| e.to_string())?;
        let xte = featurize_all(&te, &schema).map_err(|e| e.to_string())?;
        Ok((self.feature_set.select(&xtr), self.feature_set.select(&xte)))
    }
}

impl Trainer for SegmentForestTrainer<'_> {
    fn fit_predict(
        &self,
        train: &[usize],
        test: &[usize],
        seed: RngSeed,
    ) -> Result<Vec<Option<Species>>, String> {
        let (xtr, xte) = self.features(train, test)?;
        let y: Vec<Species> = train.iter().map(|&i| self.labels[i]).collect();
        let model = train_forest(&xtr, &y, &self.params, seed).map_err(|e| e.to_string())?;
        let preds = model.predict_all(&xte).map_err(|e| e.to_string())?;
        Ok(preds.into_iter().map(|p| Some(p.species)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{cross_validate, stratified_kfold};
    use crate::synth::{generate_segment_set, SegmentSetSpec};

    #[test]
    fn separable_archetypes_cross_validate_well() {
        let set = generate_segment_set(
            &SegmentSetSpec {
                per_species: 12,
                ..Default::default()
            },
            RngSeed(5),
        );
        let segments: Vec<SegmentCloud> = set.iter().map(|s| s.cloud.clone()).collect();
        let labels: Vec<Species> = set.iter().map(|s| s.species).collect();
        let trainer = SegmentForestTrainer {
            segments: &segments,
            labels: &labels,
            params: ForestParams {
                n_trees: 40,
                ..Default::default()
            },
            feature_set: FeatureSet::All,
        };
        let folds = stratified_kfold(&labels, 3, RngSeed(1)).unwrap();
        let errs = cross_validate(&folds, &labels, &trainer, RngSeed(2)).unwrap();
        let mean = errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64;
        assert!(mean < 0.35, "{errs:?}");
    }
}
