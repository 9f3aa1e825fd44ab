//! Cross-seed summary statistics: per-metric mean with a 95% confidence
//! interval under the normal approximation.

/// Mean and 95% CI half-width (1.96 * sample std / sqrt(n)) of a sample.
/// A single observation has zero half-width.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "mean_ci on empty sample");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Median of a sample (average of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median on empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
