use std::f64::consts::PI;

/// `n_sc(E) = sqrt((4 - E^2)_+) / (2 pi)`.
pub fn semicircle_density(e: f64) -> f64 {
    let v = 4.0 - e * e;
    if v > 0.0 {
        v.sqrt() / (2.0 * PI)
    } else {
        0.0
    }
}

/// Integrated density `N_sc(E)`, 0 below -2 and 1 above 2.
pub fn semicircle_cdf(e: f64) -> f64 {
    let x = e.clamp(-2.0, 2.0);
    ((x * (4.0 - x * x).max(0.0).sqrt() / 4.0 + (x / 2.0).asin()) / PI + 0.5).clamp(0.0, 1.0)
}

/// Semicircle measure of `[a, b]` (0 when `b <= a`).
pub fn semicircle_measure(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    (semicircle_cdf(b) - semicircle_cdf(a)).max(0.0)
}

/// Function object grouping the semicircle density, distribution and measure.
#[derive(Debug, Clone, Copy, Default)]
pub struct SemicircleLaw;

impl SemicircleLaw {
    pub fn density(&self, e: f64) -> f64 {
        semicircle_density(e)
    }

    pub fn cdf(&self, e: f64) -> f64 {
        semicircle_cdf(e)
    }

    pub fn measure(&self, a: f64, b: f64) -> f64 {
        semicircle_measure(a, b)
    }
}
