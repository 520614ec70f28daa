//! Small summary statistics used by the sweeps.

use crate::rng::RngState;

/// Arithmetic mean in slice order. `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over √n); 0 for
/// fewer than two values.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Percentile-bootstrap quantile of the sample mean.
pub fn bootstrap_mean_quantile(
    xs: &[f64],
    resamples: usize,
    quantile: f64,
    rng: &mut RngState,
) -> f64 {
    assert!(!xs.is_empty() && resamples > 0 && (0.0..=1.0).contains(&quantile));
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let idx = ((quantile * resamples as f64).floor() as usize).min(resamples - 1);
    means[idx]
}

/// Adjacent decreases `values[i] − values[i+1] > 0`, as `(index, drop)`.
pub fn adjacent_drops(values: &[f64]) -> Vec<(usize, f64)> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(i, w)| (i, w[0] - w[1]))
        .collect()
}

/// Non-decreasing up to at most one adjacent inversion of size `tolerance`.
pub fn nearly_non_decreasing(values: &[f64], tolerance: f64) -> bool {
    let drops = adjacent_drops(values);
    drops.len() <= 1 && drops.iter().all(|&(_, d)| d <= tolerance)
}
