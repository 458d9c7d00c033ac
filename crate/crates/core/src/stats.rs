//! Order statistics shared by normalization and report aggregation.

/// Percentile `p` (in [0, 100]) by linear interpolation of the empirical
/// CDF: with 1-based order statistics `x_1..x_n` and `h = n * p / 100`, the
/// result is `x_floor(h) + frac(h) * (x_floor(h)+1 - x_floor(h))`, clamped to
/// `x_1` / `x_n` at the ends. Returns `None` for empty input or if any value
/// is NaN. Infinite values are allowed.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    Some(percentile_sorted(&sorted, p))
}

/// As [`percentile`] for already sorted, NaN-free input.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p.clamp(0.0, 100.0) / 100.0 * n as f64;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let (a, b) = (sorted[lo - 1], sorted[lo]);
    let frac = h - lo as f64;
    // Avoids inf - inf and 0 * inf.
    if a == b || frac == 0.0 {
        a
    } else {
        a + (b - a) * frac
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
