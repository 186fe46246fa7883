//! Small regression and summary helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// Weighted straight-line fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Weighted least squares; `weights` of `None` means ordinary least squares.
/// Returns `None` for fewer than two points or a degenerate design.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (x[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w(i) * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = (0..n).map(|i| w(i) * (y[i] - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n)
        .map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = match weights {
        // weights are inverse variances: use them directly
        Some(_) => (1.0 / sxx).sqrt(),
        None if n > 2 => (sse / (n - 2) as f64 / sxx).sqrt(),
        None => 0.0,
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        points: n,
    })
}

/// Least-squares slope of `y = c x` through the origin.
pub fn slope_through_origin(x: &[f64], y: &[f64]) -> Option<f64> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Median of means over `groups` consecutive groups, with a bootstrap-free
/// spread estimate (stderr of the group means scaled by `sqrt(pi/2)`).
pub fn median_of_means(values: &[f64], groups: usize) -> (f64, f64) {
    let g = groups.clamp(1, values.len().max(1));
    let size = values.len() / g;
    if size == 0 {
        return mean_stderr(values);
    }
    let mut means: Vec<f64> = (0..g)
        .map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = mean_stderr(&means);
    means.sort_by(f64::total_cmp);
    let med = if g % 2 == 1 {
        means[g / 2]
    } else {
        0.5 * (means[g / 2 - 1] + means[g / 2])
    };
    (med, se * (std::f64::consts::PI / 2.0).sqrt())
}

/// Linear-interpolated quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}
