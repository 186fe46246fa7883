use crate::eigensolver::Spectrum;
use crate::error::{Error, Result};

/// Mean consecutive-gap ratio for iid exponential gaps, `2 ln 2 - 1`.
pub const POISSON_GAP_RATIO: f64 = 2.0 * std::f64::consts::LN_2 - 1.0;
/// Mean consecutive-gap ratio of the Gaussian orthogonal ensemble.
pub const GOE_GAP_RATIO: f64 = 0.5307;

/// Mean of `min(g_j, g_{j+1}) / max(g_j, g_{j+1})` over sorted levels.
pub fn gap_ratio_of_levels(levels: &[f64]) -> Result<f64> {
    if levels.len() < 3 {
        return Err(Error::Insufficient(format!(
            "gap ratio needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let sum: f64 = gaps
        .windows(2)
        .map(|g| {
            let (lo, hi) = if g[0] <= g[1] { (g[0], g[1]) } else { (g[1], g[0]) };
            if hi > 0.0 {
                lo / hi
            } else {
                1.0
            }
        })
        .sum();
    Ok(sum / (gaps.len() - 1) as f64)
}

/// Gap ratio of the eigenvalues in `[e0 - halfwidth, e0 + halfwidth]`.
pub fn gap_ratio_statistic(spec: &Spectrum, e0: f64, halfwidth: f64) -> Result<f64> {
    if !(halfwidth > 0.0) {
        return Err(Error::config(format!(
            "window halfwidth must be positive, got {halfwidth}"
        )));
    }
    gap_ratio_of_levels(spec.window(e0 - halfwidth, e0 + halfwidth))
}
