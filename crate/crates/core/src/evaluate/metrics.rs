use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bootstrap::BootstrapCi;
use super::EvaluateError;
use crate::model::{Species, NUM_SPECIES};

/// Rows are reference species, columns predicted species. Predictions that
/// are missing are tallied per reference species in `missing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_SPECIES]; NUM_SPECIES],
    pub missing: [u64; NUM_SPECIES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, reference: Species, predicted: Option<Species>) {
        match predicted {
            Some(p) => self.counts[reference.index()][p.index()] += 1,
            None => self.missing[reference.index()] += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..NUM_SPECIES {
            for c in 0..NUM_SPECIES {
                self.counts[r][c] += other.counts[r][c];
            }
            self.missing[r] += other.missing[r];
        }
    }

    /// Reference samples per species, missing predictions included.
    pub fn support(&self, slot: usize) -> u64 {
        self.counts[slot].iter().sum::<u64>() + self.missing[slot]
    }

    pub fn total(&self) -> u64 {
        (0..NUM_SPECIES).map(|s| self.support(s)).sum()
    }

    pub fn total_missing(&self) -> u64 {
        self.missing.iter().sum()
    }

    /// Each row divided by its support (missing predictions included); rows
    /// without samples are all zero.
    pub fn row_normalized(&self) -> [[f64; NUM_SPECIES]; NUM_SPECIES] {
        let mut out = [[0.0; NUM_SPECIES]; NUM_SPECIES];
        for r in 0..NUM_SPECIES {
            let n = self.support(r);
            if n > 0 {
                for c in 0..NUM_SPECIES {
                    out[r][c] = self.counts[r][c] as f64 / n as f64;
                }
            }
        }
        out
    }

    /// Raw counts as CSV: `reference`, one column per predicted species and
    /// `missing`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvaluateError> {
        self.write_rows(out, |r, c| self.counts[r][c].to_string(), |r| {
            self.missing[r].to_string()
        })
    }

    /// Row-normalized CSV with the same layout as [`Self::write_csv`].
    pub fn write_normalized_csv<W: Write>(&self, out: W) -> Result<(), EvaluateError> {
        let norm = self.row_normalized();
        self.write_rows(out, |r, c| format!("{:.6}", norm[r][c]), |r| {
            let n = self.support(r);
            let v = if n > 0 {
                self.missing[r] as f64 / n as f64
            } else {
                0.0
            };
            format!("{v:.6}")
        })
    }

    fn write_rows<W: Write>(
        &self,
        out: W,
        cell: impl Fn(usize, usize) -> String,
        missing: impl Fn(usize) -> String,
    ) -> Result<(), EvaluateError> {
        let err = |e: csv::Error| EvaluateError::Output(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["reference".to_string()];
        header.extend(Species::ALL.iter().map(|s| s.name().to_string()));
        header.push("missing".into());
        w.write_record(&header).map_err(err)?;
        for r in 0..NUM_SPECIES {
            let mut rec = vec![Species::ALL[r].name().to_string()];
            rec.extend((0..NUM_SPECIES).map(|c| cell(r, c)));
            rec.push(missing(r));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| EvaluateError::Output(e.to_string()))
    }
}

/// Tallies (reference, prediction) pairs; `None` is a missing prediction.
pub fn confusion(
    refs: &[Species],
    preds: &[Option<Species>],
) -> Result<ConfusionMatrix, EvaluateError> {
    if refs.len() != preds.len() {
        return Err(EvaluateError::LengthMismatch {
            refs: refs.len(),
            preds: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (r, p) in refs.iter().zip(preds) {
        cm.add(*r, *p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub species: Species,
    /// Reference samples of this species.
    pub support: u64,
    /// Samples predicted as this species.
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Precision was 0/0 (species never predicted) and reported as 0.
    pub precision_undefined: bool,
    /// Recall was 0/0 (species absent from the references) and reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: u64,
    pub n_missing: u64,
    pub overall_accuracy: f64,
    /// 1 − overall accuracy.
    pub classification_error: f64,
    /// Mean recall over the species present in the references.
    pub macro_average_accuracy: f64,
    /// Mean F1 over the species present in the references.
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci: Option<BootstrapCi>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// All accuracy metrics of a confusion matrix. Missing predictions count as
/// wrong in the overall accuracy and as false negatives of their reference
/// species.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvaluateError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvaluateError::EmptyMatrix);
    }
    let trace: u64 = (0..NUM_SPECIES).map(|k| cm.counts[k][k]).sum();
    let mut per_class = Vec::with_capacity(NUM_SPECIES);
    for (k, &species) in Species::ALL.iter().enumerate() {
        let tp = cm.counts[k][k];
        let predicted: u64 = (0..NUM_SPECIES).map(|r| cm.counts[r][k]).sum();
        let support = cm.support(k);
        let (precision, precision_undefined) = ratio(tp, predicted);
        let (recall, recall_undefined) = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            species,
            support,
            predicted,
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
        });
    }
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let n_present = present.len() as f64;
    let overall_accuracy = trace as f64 / total as f64;
    Ok(MetricsReport {
        n_samples: total,
        n_missing: cm.total_missing(),
        overall_accuracy,
        classification_error: 1.0 - overall_accuracy,
        macro_average_accuracy: present.iter().map(|c| c.recall).sum::<f64>() / n_present,
        macro_f1: present.iter().map(|c| c.f1).sum::<f64>() / n_present,
        per_class,
        ci: None,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per species plus an `overall` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvaluateError> {
        let err = |e: csv::Error| EvaluateError::Output(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "support", "predicted", "precision", "recall", "f1"])
            .map_err(err)?;
        for c in &self.per_class {
            w.write_record([
                c.species.name().to_string(),
                c.support.to_string(),
                c.predicted.to_string(),
                format!("{:.6}", c.precision),
                format!("{:.6}", c.recall),
                format!("{:.6}", c.f1),
            ])
            .map_err(err)?;
        }
        w.write_record([
            "overall".to_string(),
            self.n_samples.to_string(),
            String::new(),
            String::new(),
            format!("{:.6}", self.macro_average_accuracy),
            format!("{:.6}", self.macro_f1),
        ])
        .map_err(err)?;
        w.flush().map_err(|e| EvaluateError::Output(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Species::*;

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[Pine, Pine], &[Some(Pine), Some(Spruce)]).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][1], 1);
        let cm = confusion(&[Pine, Oak], &[None, None]).unwrap();
        assert_eq!(cm.total_missing(), 2);
        assert!(cm.counts.iter().flatten().all(|&c| c == 0));
        assert!(confusion(&[Pine], &[]).is_err());
    }

    #[test]
    fn two_class_hand_example() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 2;
        cm.counts[1][0] = 1;
        cm.counts[1][1] = 1;
        let m = metrics(&cm).unwrap();
        assert_eq!(m.overall_accuracy, 0.75);
        assert_eq!(m.per_class[0].recall, 1.0);
        assert_eq!(m.per_class[1].recall, 0.5);
        assert_eq!(m.macro_average_accuracy, 0.75);
        assert!((m.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert!(m.per_class[2].precision_undefined);
    }

    #[test]
    fn diagonal_is_perfect() {
        let mut cm = ConfusionMatrix::default();
        for k in 0..NUM_SPECIES {
            cm.counts[k][k] = 3 + k as u64;
        }
        let m = metrics(&cm).unwrap();
        assert_eq!(m.overall_accuracy, 1.0);
        assert_eq!(m.macro_average_accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.classification_error, 0.0);
    }

    #[test]
    fn missing_counts_as_wrong() {
        let cm = confusion(&[Pine, Pine], &[Some(Pine), None]).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.overall_accuracy, 0.5);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert_eq!(m.per_class[0].precision, 1.0);
        assert_eq!(metrics(&ConfusionMatrix::default()), Err(EvaluateError::EmptyMatrix));
    }

    #[test]
    fn csv_layout() {
        let cm = confusion(&[Pine, Birch], &[Some(Pine), Some(Pine)]).unwrap();
        let mut buf = Vec::new();
        cm.write_normalized_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "reference,pine,spruce,birch,maple,aspen,rowan,oak,linden,alder,missing");
        assert!(lines[3].starts_with("birch,1.000000,0.000000"));
    }
}
