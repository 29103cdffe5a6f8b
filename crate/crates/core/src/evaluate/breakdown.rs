use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{metrics, ConfusionMatrix, MetricsReport};
use super::EvaluateError;
use crate::model::{SegmentLabel, Species};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownBy {
    ProfileCategory,
    CrownClass,
    Species,
}

impl std::str::FromStr for BreakdownBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "profile_category" | "profile" => Ok(Self::ProfileCategory),
            "crown_class" | "crown" => Ok(Self::CrownClass),
            "species" => Ok(Self::Species),
            other => Err(format!("unknown breakdown key {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEntry {
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
}

/// Metrics on each category's subset. Empty categories are omitted;
/// unassigned segments are reported under `"unassigned"`.
pub fn breakdown(
    labels: &[SegmentLabel],
    preds: &[Option<Species>],
    by: BreakdownBy,
) -> Result<BTreeMap<String, BreakdownEntry>, EvaluateError> {
    if labels.len() != preds.len() {
        return Err(EvaluateError::LengthMismatch {
            refs: labels.len(),
            preds: preds.len(),
        });
    }
    let mut cms: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    for (l, p) in labels.iter().zip(preds) {
        let key = match by {
            BreakdownBy::ProfileCategory => l.profile_category.report_key(),
            BreakdownBy::CrownClass => l.crown_class.report_key(),
            BreakdownBy::Species => l.species.name(),
        };
        cms.entry(key.to_string()).or_default().add(l.species, *p);
    }
    cms.into_iter()
        .map(|(k, cm)| {
            let report = metrics(&cm)?;
            Ok((
                k,
                BreakdownEntry {
                    confusion: cm,
                    report,
                },
            ))
        })
        .collect()
}
