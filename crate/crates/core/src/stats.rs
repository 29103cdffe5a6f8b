//! Small descriptive-statistics helpers shared across modules.

/// Linear-interpolation percentile of already sorted data (`q` in 0..=100).
///
/// Matches the default definition of numpy's `percentile`: rank
/// `q/100 · (n − 1)` interpolated between neighbours. Returns `None` for an
/// empty slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        Some(sorted[lo])
    } else {
        Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
    }
}

/// Sorts a copy of `values` (total order) and takes the percentile.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

/// Sample standard deviation (n − 1 denominator); `None` below two values.
pub fn std_sample(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

/// Median of the finite entries of `values`.
pub fn median_finite(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_numpy_linear() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&v, 0.0), Some(1.0));
        assert_eq!(percentile_sorted(&v, 100.0), Some(4.0));
        assert_eq!(percentile_sorted(&v, 50.0), Some(2.5));
        // numpy.percentile([1,2,3,4], 10) == 1.3
        assert!((percentile_sorted(&v, 10.0).unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[], 50.0), None);
        assert_eq!(percentile_sorted(&[7.0], 2.5), Some(7.0));
    }

    #[test]
    fn moments() {
        let v = [-5.0, -7.0];
        assert_eq!(mean(&v), Some(-6.0));
        assert_eq!(std_pop(&v), Some(1.0));
        assert!((std_sample(&v).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(std_sample(&[1.0]), None);
        assert_eq!(median_finite([3.0, f64::NAN, 1.0, 2.0]), Some(2.0));
    }
}
