use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::ClassifyError;
use crate::exec;
use crate::model::{RngSeed, Species, NUM_SPECIES};
use crate::stats;

pub const MODEL_VERSION: &str = "canopy-forest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceMode {
    /// Plain bootstrap of size |X|.
    #[default]
    None,
    /// Every tree draws the same number of samples from each class.
    BalancedBootstrap,
    /// Small classes are topped up with Gaussian-jittered synthetic samples
    /// before training.
    JitterOversample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means ⌊√F⌋.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub imbalance: ImbalanceMode,
    /// Target class size for [`ImbalanceMode::JitterOversample`].
    pub min_per_class: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            imbalance: ImbalanceMode::None,
            min_per_class: 125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: String,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: RngSeed,
    /// Species codes seen in training, ascending.
    pub classes: Vec<u8>,
    /// Number of caller-supplied training rows (synthetic rows excluded).
    pub n_train: usize,
    pub trees: Vec<DecisionTree>,
    /// Sorted distinct caller-row indices each tree was trained on.
    pub in_bag: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub species: Species,
    /// Probability per species slot (code − 1).
    pub probabilities: [f64; NUM_SPECIES],
}

fn check_matrix(x: &[Vec<f64>], n_features: usize) -> Result<(), ClassifyError> {
    for (row, v) in x.iter().enumerate() {
        if v.len() != n_features {
            return Err(ClassifyError::LengthMismatch {
                expected: n_features,
                got: v.len(),
            });
        }
        if let Some(col) = v.iter().position(|f| !f.is_finite()) {
            return Err(ClassifyError::NonFiniteFeature { row, col });
        }
    }
    Ok(())
}

fn indices_by_class(y: &[Species]) -> Vec<Vec<u32>> {
    let mut by = vec![Vec::new(); NUM_SPECIES];
    for (i, s) in y.iter().enumerate() {
        by[s.index()].push(i as u32);
    }
    by
}

/// Tops up every class with fewer than `min_per_class` rows by drawing each
/// feature from a normal distribution with the class mean and sample standard
/// deviation. Original rows keep their order; synthetic rows follow, grouped
/// by ascending species code.
pub fn jitter_oversample(
    x: &[Vec<f64>],
    y: &[Species],
    min_per_class: usize,
    seed: RngSeed,
) -> Result<(Vec<Vec<f64>>, Vec<Species>), ClassifyError> {
    if x.len() != y.len() {
        return Err(ClassifyError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n_features = x.first().map_or(0, Vec::len);
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    for (slot, members) in indices_by_class(y).iter().enumerate() {
        if members.is_empty() || members.len() >= min_per_class {
            continue;
        }
        let species = Species::from_index(slot).unwrap();
        if members.len() < 2 {
            return Err(ClassifyError::ClassTooSmall {
                species,
                count: members.len(),
            });
        }
        let dists: Vec<Normal<f64>> = (0..n_features)
            .map(|j| {
                let col: Vec<f64> = members.iter().map(|&i| x[i as usize][j]).collect();
                let m = stats::mean(&col).unwrap();
                let s = stats::std_sample(&col).unwrap();
                Normal::new(m, s).expect("finite mean and std")
            })
            .collect();
        let mut rng = seed.derive_tagged("jitter", u64::from(species.code())).rng();
        for _ in members.len()..min_per_class {
            xs.push(dists.iter().map(|d| d.sample(&mut rng)).collect());
            ys.push(species);
        }
    }
    Ok((xs, ys))
}

/// Trains a random forest. Each tree gets its own seed derived from `seed`
/// and the tree index, so results do not depend on scheduling.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[Species],
    params: &ForestParams,
    seed: RngSeed,
) -> Result<ForestModel, ClassifyError> {
    if x.len() != y.len() {
        return Err(ClassifyError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if params.n_trees == 0 || params.min_samples_leaf == 0 {
        return Err(ClassifyError::InvalidParams(
            "n_trees and min_samples_leaf must be positive".into(),
        ));
    }
    let n_features = x.first().map_or(0, Vec::len);
    check_matrix(x, n_features)?;
    let classes: Vec<u8> = {
        let mut c: Vec<u8> = y.iter().map(|s| s.code()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if classes.len() < 2 || n_features == 0 {
        return Err(ClassifyError::DegenerateLabels);
    }
    let n_train = x.len();
    let (xt, yt) = match params.imbalance {
        ImbalanceMode::JitterOversample => jitter_oversample(x, y, params.min_per_class, seed)?,
        _ => (x.to_vec(), y.to_vec()),
    };
    let y_slot: Vec<u8> = yt.iter().map(|s| s.index() as u8).collect();
    let by_class = indices_by_class(&yt);
    let present: Vec<&Vec<u32>> = by_class.iter().filter(|v| !v.is_empty()).collect();
    let per_class = (xt.len() as f64 / present.len() as f64).round().max(1.0) as usize;
    let tree_params = TreeParams {
        max_features: params
            .max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features),
        min_samples_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
    };

    let grown = exec::map_range(params.n_trees, |t| {
        let mut rng = seed.derive_tagged("tree", t as u64).rng();
        let samples: Vec<u32> = match params.imbalance {
            ImbalanceMode::BalancedBootstrap => present
                .iter()
                .flat_map(|members| {
                    (0..per_class)
                        .map(|_| members[rng.random_range(0..members.len())])
                        .collect::<Vec<_>>()
                })
                .collect(),
            _ => (0..xt.len())
                .map(|_| rng.random_range(0..xt.len()) as u32)
                .collect(),
        };
        let mut bag: Vec<u32> = samples.iter().copied().filter(|&i| (i as usize) < n_train).collect();
        bag.sort_unstable();
        bag.dedup();
        let tree = DecisionTree::fit(&xt, &y_slot, samples, tree_params, &mut rng);
        (tree, bag)
    });
    let (trees, in_bag) = grown.into_iter().unzip();
    Ok(ForestModel {
        version: MODEL_VERSION.into(),
        n_features,
        params: *params,
        seed,
        classes,
        n_train,
        trees,
        in_bag,
    })
}

fn argmax_lowest(p: &[f64; NUM_SPECIES]) -> Species {
    let mut best = 0;
    for k in 1..NUM_SPECIES {
        if p[k] > p[best] {
            best = k;
        }
    }
    Species::from_index(best).unwrap()
}

fn aggregate<'a>(leaves: impl Iterator<Item = &'a [f64; NUM_SPECIES]>) -> Option<Prediction> {
    let mut sum = [0.0; NUM_SPECIES];
    let mut n = 0usize;
    for leaf in leaves {
        for k in 0..NUM_SPECIES {
            sum[k] += leaf[k];
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let total: f64 = sum.iter().sum();
    let probabilities = sum.map(|v| v / total);
    Some(Prediction {
        species: argmax_lowest(&probabilities),
        probabilities,
    })
}

/// Mean of the per-tree leaf frequencies; the species is the argmax with ties
/// going to the lowest code.
pub fn predict(model: &ForestModel, x: &[f64]) -> Result<Prediction, ClassifyError> {
    if x.len() != model.n_features {
        return Err(ClassifyError::LengthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    Ok(aggregate(model.trees.iter().map(|t| t.leaf_of(x))).expect("forest has trees"))
}

impl ForestModel {
    /// Predicts every row in parallel, in row order.
    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<Prediction>, ClassifyError> {
        exec::try_map_range(x.len(), |i| predict(self, &x[i]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ClassifyError::Model(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(ClassifyError::Model(format!(
                "unsupported model version {:?}",
                m.version
            )));
        }
        if m.trees.len() != m.in_bag.len() {
            return Err(ClassifyError::Model("tree and in-bag counts differ".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobEstimate {
    /// Error rate over the samples that had at least one out-of-bag tree.
    pub error: f64,
    pub evaluated: usize,
    /// Samples that were in the bag of every tree.
    pub excluded: usize,
}

/// Out-of-bag error on the training rows the model was fitted on.
pub fn oob_error(
    model: &ForestModel,
    x: &[Vec<f64>],
    y: &[Species],
) -> Result<OobEstimate, ClassifyError> {
    if x.len() != y.len() || x.len() != model.n_train {
        return Err(ClassifyError::LengthMismatch {
            expected: model.n_train,
            got: x.len().min(y.len()),
        });
    }
    check_matrix(x, model.n_features)?;
    let votes = exec::map_range(x.len(), |i| {
        let oob = model
            .trees
            .iter()
            .zip(&model.in_bag)
            .filter(|(_, bag)| bag.binary_search(&(i as u32)).is_err())
            .map(|(t, _)| t.leaf_of(&x[i]));
        aggregate(oob).map(|p| p.species == y[i])
    });
    let evaluated = votes.iter().flatten().count();
    let wrong = votes.iter().flatten().filter(|&&ok| !ok).count();
    Ok(OobEstimate {
        error: if evaluated > 0 {
            wrong as f64 / evaluated as f64
        } else {
            f64::NAN
        },
        evaluated,
        excluded: x.len() - evaluated,
    })
}

/// Writes `segment_id,predicted_code,p1..p9`.
pub fn write_predictions<W: Write>(
    out: W,
    segment_ids: &[u32],
    predictions: &[Prediction],
) -> Result<(), ClassifyError> {
    let err = |e: csv::Error| ClassifyError::Predictions(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["segment_id".to_string(), "predicted_code".to_string()];
    header.extend((1..=NUM_SPECIES).map(|k| format!("p{k}")));
    w.write_record(&header).map_err(err)?;
    for (id, p) in segment_ids.iter().zip(predictions) {
        let mut rec = vec![id.to_string(), p.species.code().to_string()];
        rec.extend(p.probabilities.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| ClassifyError::Predictions(e.to_string()))
}

/// Reads `segment_id,predicted_code[,p1..p9]`. An empty predicted code is a
/// missing prediction.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<(u32, Option<Species>)>, ClassifyError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ClassifyError::Predictions(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: String| ClassifyError::Predictions(format!("line {line}: {m}"));
        let id: u32 = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| bad("bad segment_id".into()))?;
        let code = rec.get(1).unwrap_or("").trim();
        let species = if code.is_empty() {
            None
        } else {
            let c: i64 = code.parse().map_err(|_| bad(format!("bad code {code:?}")))?;
            Some(Species::from_code(c).map_err(|e| bad(e.to_string()))?)
        };
        out.push((id, species));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(n: usize) -> (Vec<Vec<f64>>, Vec<Species>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rng = RngSeed(5).rng();
        for i in 0..2 * n {
            let cls = i % 2;
            let f0 = if cls == 0 {
                rng.random_range(0.0..0.5)
            } else {
                rng.random_range(0.5001..1.0)
            };
            x.push(vec![f0, rng.random(), rng.random()]);
            y.push(if cls == 0 { Species::Pine } else { Species::Birch });
        }
        (x, y)
    }

    fn small_params(n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            ..Default::default()
        }
    }

    #[test]
    fn separable_oob() {
        let (x, y) = two_class(100);
        let m = train_forest(&x, &y, &small_params(50), RngSeed(1)).unwrap();
        let oob = oob_error(&m, &x, &y).unwrap();
        assert!(oob.error <= 0.02, "{oob:?}");
        assert_eq!(oob.excluded, 0);
    }

    #[test]
    fn degenerate_labels() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![Species::Oak, Species::Oak];
        assert_eq!(
            train_forest(&x, &y, &small_params(3), RngSeed(1)).unwrap_err(),
            ClassifyError::DegenerateLabels
        );
    }

    #[test]
    fn non_finite_rejected() {
        let x = vec![vec![1.0], vec![f64::NAN]];
        let y = vec![Species::Oak, Species::Pine];
        assert_eq!(
            train_forest(&x, &y, &small_params(3), RngSeed(1)).unwrap_err(),
            ClassifyError::NonFiniteFeature { row: 1, col: 0 }
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = two_class(30);
        let a = train_forest(&x, &y, &small_params(10), RngSeed(9)).unwrap();
        let b = train_forest(&x, &y, &small_params(10), RngSeed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let back = ForestModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn probabilities_sum_to_one_and_ties_go_low() {
        let (x, y) = two_class(20);
        let m = train_forest(&x, &y, &small_params(7), RngSeed(2)).unwrap();
        for row in &x {
            let p = predict(&m, row).unwrap();
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut tie = [0.0; NUM_SPECIES];
        tie[2] = 0.5;
        tie[6] = 0.5;
        assert_eq!(argmax_lowest(&tie), Species::Birch);
        assert!(matches!(
            predict(&m, &[1.0]),
            Err(ClassifyError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn balanced_bootstrap_equal_counts() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..90 {
            x.push(vec![i as f64]);
            y.push(if i < 80 { Species::Pine } else { Species::Oak });
        }
        let params = ForestParams {
            n_trees: 200,
            imbalance: ImbalanceMode::BalancedBootstrap,
            ..Default::default()
        };
        let m = train_forest(&x, &y, &params, RngSeed(3)).unwrap();
        // With 45 draws from 10 oak rows nearly every oak row is in the bag.
        let oak_in_bag: f64 = m
            .in_bag
            .iter()
            .map(|b| b.iter().filter(|&&i| i >= 80).count() as f64)
            .sum::<f64>()
            / 200.0;
        assert!(oak_in_bag > 9.0, "{oak_in_bag}");
    }

    #[test]
    fn jitter_tops_up_small_classes() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            x.push(vec![i as f64, 1.0]);
            y.push(Species::Rowan);
        }
        for i in 0..130 {
            x.push(vec![i as f64, 2.0]);
            y.push(Species::Pine);
        }
        let (xs, ys) = jitter_oversample(&x, &y, 125, RngSeed(4)).unwrap();
        assert_eq!(ys.iter().filter(|s| **s == Species::Rowan).count(), 125);
        assert_eq!(ys.iter().filter(|s| **s == Species::Pine).count(), 130);
        assert_eq!(&xs[..140], &x[..]);
        // Constant column stays constant.
        assert!(xs[140..].iter().all(|r| r[1] == 1.0));
        let one = vec![vec![1.0]];
        assert_eq!(
            jitter_oversample(&one, &[Species::Oak], 125, RngSeed(1)).unwrap_err(),
            ClassifyError::ClassTooSmall {
                species: Species::Oak,
                count: 1
            }
        );
    }

    #[test]
    fn predictions_csv_round_trip() {
        let mut p = [0.0; NUM_SPECIES];
        p[4] = 1.0;
        let preds = vec![Prediction {
            species: Species::Aspen,
            probabilities: p,
        }];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[17], &preds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("segment_id,predicted_code,p1,p2,p3,p4,p5,p6,p7,p8,p9\n17,5,"));
        assert_eq!(
            read_predictions(buf.as_slice()).unwrap(),
            vec![(17, Some(Species::Aspen))]
        );
    }
}
