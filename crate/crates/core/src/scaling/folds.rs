use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ScalingError;
use crate::model::{RngSeed, Species, NUM_SPECIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold of every sample; `None` for samples left out by subsampling.
    pub folds: Vec<Option<usize>>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.indices(|f| f == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.indices(|f| f != fold)
    }

    /// All samples that belong to some fold.
    pub fn members(&self) -> Vec<usize> {
        self.indices(|_| true)
    }

    fn indices(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.filter(|&f| keep(f)).map(|_| i))
            .collect()
    }

    /// Count of members per (fold, species slot).
    pub fn class_counts(&self, labels: &[Species]) -> Vec<[usize; NUM_SPECIES]> {
        let mut c = vec![[0usize; NUM_SPECIES]; self.k];
        for (f, s) in self.folds.iter().zip(labels) {
            if let Some(f) = f {
                c[*f][s.index()] += 1;
            }
        }
        c
    }
}

fn members_by_class(labels: &[Species], keep: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); NUM_SPECIES];
    for (i, s) in labels.iter().enumerate() {
        if keep(i) {
            by[s.index()].push(i);
        }
    }
    by
}

/// Shuffles each class and deals it round-robin over the folds. The dealing
/// position carries over from one class to the next (in species-code order),
/// so fold sizes also stay within one of each other.
pub fn stratified_kfold(
    labels: &[Species],
    k: usize,
    seed: RngSeed,
) -> Result<FoldAssignment, ScalingError> {
    if k < 2 {
        return Err(ScalingError::InvalidK(k));
    }
    let by = members_by_class(labels, |_| true);
    for (slot, m) in by.iter().enumerate() {
        if !m.is_empty() && m.len() < k {
            return Err(ScalingError::ClassSmallerThanK {
                species: Species::from_index(slot).unwrap(),
                count: m.len(),
                k,
            });
        }
    }
    let mut folds = vec![None; labels.len()];
    let mut offset = 0;
    for (slot, mut members) in by.into_iter().enumerate() {
        let mut rng = seed.derive_tagged("kfold", slot as u64).rng();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = Some((offset + j) % k);
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldAssignment { k, folds })
}

/// Keeps ⌈fraction · n⌉ members of every (fold, class) cell. Each cell is
/// ordered by a permutation that depends on the seed and the cell only, and
/// the kept members are a prefix of it, so for one seed the subset at a
/// smaller fraction is contained in the subset at a larger one.
pub fn nested_subsample(
    folds: &FoldAssignment,
    labels: &[Species],
    fraction: f64,
    seed: RngSeed,
) -> Result<FoldAssignment, ScalingError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ScalingError::InvalidFraction(fraction));
    }
    let mut out = vec![None; folds.folds.len()];
    for fold in 0..folds.k {
        let by = members_by_class(labels, |i| folds.folds[i] == Some(fold));
        for (slot, mut members) in by.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let cell = (fold * NUM_SPECIES + slot) as u64;
            members.shuffle(&mut seed.derive_tagged("nested", cell).rng());
            // Guard against 0.1 · 30 = 3.0000000000000004 rounding up to 4.
            let keep = ((fraction * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            for &i in &members[..keep.min(members.len())] {
                out[i] = Some(fold);
            }
        }
    }
    Ok(FoldAssignment {
        k: folds.k,
        folds: out,
    })
}

/// Marks ⌈fraction · n_c⌉ members of every class as test (`true`), except
/// that a class keeps at least one training member when it has two or more.
pub fn stratified_holdout(
    labels: &[Species],
    fraction: f64,
    seed: RngSeed,
) -> Result<Vec<bool>, ScalingError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ScalingError::InvalidFraction(fraction));
    }
    let mut test = vec![false; labels.len()];
    for (slot, mut members) in members_by_class(labels, |_| true).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut seed.derive_tagged("holdout", slot as u64).rng());
        let n = members.len();
        let mut keep = ((fraction * n as f64) - 1e-9).ceil() as usize;
        if n >= 2 {
            keep = keep.min(n - 1);
        }
        for &i in &members[..keep] {
            test[i] = true;
        }
    }
    Ok(test)
}
