//! Collects the JSON results found in an output directory into
//! `report.json` and a short Markdown summary.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::files;
use crate::stages::{Ctx, EvaluationOutput, ScalingFit};

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// Directory to summarize (default: the output directory).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

impl Default for ReportArgs {
    fn default() -> Self {
        Self::parse_from(["canopy"])
    }
}

#[derive(Debug, Default, Serialize)]
struct Report {
    segmentation: Option<Value>,
    oob: Option<Value>,
    metrics: Option<EvaluationOutput>,
    fits: BTreeMap<String, ScalingFit>,
}

pub fn report(ctx: &Ctx, args: &ReportArgs) -> Result<Vec<PathBuf>> {
    let dir = args.dir.as_ref().map_or_else(|| ctx.out.clone(), |d| ctx.resolve(d));
    let optional = |name: &str| {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    let mut r = Report::default();
    if let Some(p) = optional("segmentation.json") {
        r.segmentation = Some(files::read_json(&p)?);
    }
    if let Some(p) = optional("oob.json") {
        r.oob = Some(files::read_json(&p)?);
    }
    if let Some(p) = optional("metrics.json") {
        r.metrics = Some(files::read_json(&p)?);
    }
    let mut names: Vec<String> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("fit_") && n.ends_with(".json"))
        .collect();
    names.sort();
    for n in names {
        let fit: ScalingFit = files::read_json(&dir.join(&n))?;
        r.fits.insert(n.trim_start_matches("fit_").trim_end_matches(".json").to_string(), fit);
    }

    let mut md = String::from("# Run report\n\n");
    if let Some(s) = &r.segmentation {
        let _ = writeln!(
            md,
            "Segmentation: {} segments, {} tree tops, {} input points.\n",
            s["segments"], s["treetops"], s["input_points"]
        );
    }
    if let Some(m) = &r.metrics {
        let _ = writeln!(md, "## Accuracy ({} segments)\n", m.n_evaluated);
        let _ = writeln!(md, "| metric | value | CI |\n|---|---|---|");
        let ci = |v: Option<(f64, f64)>| v.map_or(String::new(), |(lo, hi)| format!("{lo:.4} to {hi:.4}"));
        let _ = writeln!(
            md,
            "| overall accuracy | {:.4} | {} |",
            m.report.overall_accuracy,
            ci(m.bootstrap.as_ref().map(|b| b.overall_accuracy))
        );
        let _ = writeln!(
            md,
            "| macro-average accuracy | {:.4} | {} |",
            m.report.macro_average_accuracy,
            ci(m.bootstrap.as_ref().map(|b| b.macro_average_accuracy))
        );
        let _ = writeln!(md, "| macro F1 | {:.4} | |\n", m.report.macro_f1);
        let _ = writeln!(md, "| species | support | precision | recall | F1 |\n|---|---|---|---|---|");
        for c in m.report.per_class.iter().filter(|c| c.support > 0 || c.predicted > 0) {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} | {:.3} |",
                c.species.name(),
                c.support,
                c.precision,
                c.recall,
                c.f1
            );
        }
        md.push('\n');
    }
    for (name, fit) in &r.fits {
        let _ = writeln!(md, "## Scaling fit: {name}\n");
        for (kind, f) in [("overall", &fit.overall), ("macro", &fit.r#macro)] {
            match f {
                Some(f) => {
                    let _ = writeln!(
                        md,
                        "- {kind}: A = {:.4}, alpha = {:.4}, R² = {:.3} over {} points",
                        f.a, f.alpha, f.r_squared, f.n_points
                    );
                }
                None => {
                    let _ = writeln!(md, "- {kind}: no fit");
                }
            }
        }
        for e in &fit.extrapolations {
            let x = e.x.map_or_else(|| e.note.clone().unwrap_or_default(), |x| format!("{x:.0}"));
            let _ = writeln!(md, "- {:?} error {}: x = {x}", e.kind, e.target);
        }
        md.push('\n');
    }
    let json_path = ctx.out_file("report.json");
    files::write_json(&json_path, &r)?;
    let md_path = ctx.out_file("report.md");
    files::write_text(&md_path, &md)?;
    Ok(vec![json_path, md_path])
}
