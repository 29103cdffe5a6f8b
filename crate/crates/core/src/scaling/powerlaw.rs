use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use super::ScalingError;

/// ε(x) = A · x^(−α).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub alpha: f64,
    /// Coefficient of determination of the log-log fit.
    pub r_squared: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    /// Curve through one anchor point with a given exponent.
    pub fn from_anchor(x: f64, error: f64, alpha: f64) -> Self {
        Self {
            a: error * x.powf(alpha),
            alpha,
            r_squared: f64::NAN,
            x_min: x,
            x_max: x,
            n_points: 1,
        }
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.powf(-self.alpha)
    }
}

/// Ordinary least squares on (ln x, ln ε): the slope is −α and the
/// intercept ln A.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, ScalingError> {
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(ScalingError::NonPositiveInput { x, y });
    }
    let n = points.len();
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if n < 2 || sxx == 0.0 {
        return Err(ScalingError::TooFewPoints(n));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let ss_tot: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let xs = points.iter().map(|p| p.0);
    Ok(PowerLawFit {
        a: intercept.exp(),
        alpha: -slope,
        r_squared,
        x_min: xs.clone().fold(f64::INFINITY, f64::min),
        x_max: xs.fold(f64::NEG_INFINITY, f64::max),
        n_points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Overall,
    Macro,
}

/// Fits the fold-mean errors of a sweep, optionally restricted to
/// `x_min <= x <= x_max`. Points with zero error are skipped with a warning.
pub fn fit_sweep(
    sweep: &SweepResult,
    kind: ErrorKind,
    range: Option<(f64, f64)>,
) -> Result<PowerLawFit, ScalingError> {
    let mut pts = Vec::new();
    for p in &sweep.points {
        if range.is_some_and(|(lo, hi)| p.x < lo || p.x > hi) {
            continue;
        }
        let e = match kind {
            ErrorKind::Overall => p.overall_error,
            ErrorKind::Macro => p.macro_error,
        };
        if e == 0.0 {
            log::warn!("skipping x = {} with zero error in the power-law fit", p.x);
            continue;
        }
        pts.push((p.x, e));
    }
    fit_power_law(&pts)
}

/// Training size needed to reach `target` error: (A / target)^(1/α).
pub fn extrapolate_m(fit: &PowerLawFit, target: f64) -> Result<f64, ScalingError> {
    if !(fit.alpha > 0.0) {
        return Err(ScalingError::NonConvergentFit(fit.alpha));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(ScalingError::InvalidTarget(target));
    }
    Ok((fit.a / target).powf(1.0 / fit.alpha))
}
