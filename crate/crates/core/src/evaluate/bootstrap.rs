use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EvaluateError;
use crate::exec;
use crate::model::{RngSeed, Species, NUM_SPECIES};
use crate::stats;

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub n_boot: usize,
    pub level: f64,
    pub overall_accuracy: (f64, f64),
    pub macro_average_accuracy: (f64, f64),
}

/// Percentile bootstrap of overall and macro-average accuracy. Each replicate
/// resamples the (reference, prediction) pairs with replacement using a seed
/// derived from the replicate index; bounds are the linear-interpolation
/// percentiles at (1 − level)/2 and (1 + level)/2.
pub fn bootstrap_ci(
    refs: &[Species],
    preds: &[Option<Species>],
    n_boot: usize,
    level: f64,
    seed: RngSeed,
) -> Result<BootstrapCi, EvaluateError> {
    if refs.len() != preds.len() {
        return Err(EvaluateError::LengthMismatch {
            refs: refs.len(),
            preds: preds.len(),
        });
    }
    if refs.len() < 2 {
        return Err(EvaluateError::TooFewSamples(refs.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvaluateError::InvalidLevel(level));
    }
    let n = refs.len();
    let slot: Vec<u8> = refs.iter().map(|s| s.index() as u8).collect();
    let correct: Vec<bool> = refs.iter().zip(preds).map(|(r, p)| Some(*r) == *p).collect();

    let reps = exec::map_range(n_boot, |b| {
        let mut rng = seed.derive_tagged("bootstrap", b as u64).rng();
        let mut support = [0u32; NUM_SPECIES];
        let mut hits = [0u32; NUM_SPECIES];
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let s = slot[i] as usize;
            support[s] += 1;
            hits[s] += correct[i] as u32;
        }
        let oa = hits.iter().sum::<u32>() as f64 / n as f64;
        let (mut sum, mut k) = (0.0, 0);
        for c in 0..NUM_SPECIES {
            if support[c] > 0 {
                sum += hits[c] as f64 / support[c] as f64;
                k += 1;
            }
        }
        (oa, sum / k as f64)
    });
    let mut oa: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let mut ma: Vec<f64> = reps.iter().map(|r| r.1).collect();
    oa.sort_by(f64::total_cmp);
    ma.sort_by(f64::total_cmp);
    let (qlo, qhi) = (50.0 * (1.0 - level), 50.0 * (1.0 + level));
    let bounds = |v: &[f64]| {
        (
            stats::percentile_sorted(v, qlo).unwrap_or(f64::NAN),
            stats::percentile_sorted(v, qhi).unwrap_or(f64::NAN),
        )
    };
    Ok(BootstrapCi {
        n_boot,
        level,
        overall_accuracy: bounds(&oa),
        macro_average_accuracy: bounds(&ma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Species::*;

    #[test]
    fn perfect_predictions() {
        let refs = vec![Pine, Spruce, Birch, Pine];
        let preds: Vec<_> = refs.iter().map(|s| Some(*s)).collect();
        let ci = bootstrap_ci(&refs, &preds, 200, 0.95, RngSeed(1)).unwrap();
        assert_eq!(ci.overall_accuracy, (1.0, 1.0));
        assert_eq!(ci.macro_average_accuracy, (1.0, 1.0));
    }

    #[test]
    fn deterministic_and_contains_estimate() {
        let refs: Vec<Species> = (0..300).map(|i| Species::ALL[i % 4]).collect();
        let preds: Vec<Option<Species>> = (0..300)
            .map(|i| Some(if i % 5 == 0 { Oak } else { Species::ALL[i % 4] }))
            .collect();
        let a = bootstrap_ci(&refs, &preds, 500, 0.95, RngSeed(7)).unwrap();
        let b = bootstrap_ci(&refs, &preds, 500, 0.95, RngSeed(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.overall_accuracy.0 <= 0.8 && 0.8 <= a.overall_accuracy.1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            bootstrap_ci(&[Pine], &[Some(Pine)], 10, 0.95, RngSeed(1)),
            Err(EvaluateError::TooFewSamples(1))
        );
        assert!(bootstrap_ci(&[Pine, Pine], &[None, None], 10, 1.5, RngSeed(1)).is_err());
    }
}
