use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples for an exponent estimate.
pub const MIN_SAMPLES: usize = 100;

/// `t_k = -pi + 2 pi k / 64`, `k = 0..64`; contains `t = 0`.
pub fn default_t_grid() -> Vec<f64> {
    (0..64).map(|k| -PI + 2.0 * PI * k as f64 / 64.0).collect()
}

/// Log of the empirical characteristic function of integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CharExponentEstimate {
    pub t_grid: Vec<f64>,
    pub psi: Vec<Complex64>,
    /// Standard error of `psi` (modulus of the complex error).
    pub stderr: Vec<f64>,
    /// `false` where the empirical modulus is within ten standard errors of 0.
    pub valid: Vec<bool>,
    pub trials: usize,
}

/// Empirical `ln E exp(i t X)` on the principal branch.
pub fn char_exponent(counts: &[u64], t_grid: Option<&[f64]>) -> Result<CharExponentEstimate> {
    let n = counts.len();
    if n < MIN_SAMPLES {
        return Err(Error::Insufficient(format!(
            "characteristic exponent needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    let grid = match t_grid {
        Some(g) => g.to_vec(),
        None => default_t_grid(),
    };
    if grid.is_empty() {
        return Err(Error::config("empty t grid"));
    }
    // histogram of counts keeps the cost independent of n per grid point
    let max = *counts.iter().max().expect("nonempty") as usize;
    let mut hist = vec![0u64; max + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    let nf = n as f64;
    let mut psi = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    let mut valid = Vec::with_capacity(grid.len());
    for &t in &grid {
        let mut phi = Complex64::new(0.0, 0.0);
        for (k, &h) in hist.iter().enumerate() {
            if h > 0 {
                phi += Complex64::from_polar(h as f64, t * k as f64);
            }
        }
        phi /= nf;
        let modulus = phi.norm().min(1.0);
        let sigma = ((1.0 - modulus * modulus).max(0.0) / nf).sqrt();
        let ok = modulus > 0.0 && modulus >= 10.0 * sigma;
        psi.push(if modulus > 0.0 {
            Complex64::new(modulus.ln(), phi.arg())
        } else {
            Complex64::new(f64::NEG_INFINITY, 0.0)
        });
        stderr.push(if modulus > 0.0 {
            sigma / modulus
        } else {
            f64::INFINITY
        });
        valid.push(ok);
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::Insufficient(
            "characteristic exponent invalid at every grid point".into(),
        ));
    }
    Ok(CharExponentEstimate {
        t_grid: grid,
        psi,
        stderr,
        valid,
        trials: n,
    })
}

/// Deviation of an estimated exponent from the compound form
/// `rate (e^{it} - 1)` of a Poisson count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonExponentCheck {
    pub rate: f64,
    pub rate_stderr: f64,
    /// Largest standardized residual over the valid grid points.
    pub max_z: f64,
    /// Largest raw residual `|psi - rate (e^{it}-1)|`.
    pub max_abs: f64,
    pub t_at_max: f64,
    pub valid_points: usize,
}

impl PoissonExponentCheck {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_z < threshold
    }
}

/// Pointwise comparison with the error of `psi` and of `rate` combined in
/// quadrature.
pub fn poisson_exponent_check(
    est: &CharExponentEstimate,
    rate: f64,
    rate_stderr: f64,
) -> PoissonExponentCheck {
    let mut max_z: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut t_at_max = 0.0;
    let mut valid_points = 0;
    for (k, &t) in est.t_grid.iter().enumerate() {
        if !est.valid[k] {
            continue;
        }
        valid_points += 1;
        let unit = Complex64::new(t.cos() - 1.0, t.sin());
        let resid = (est.psi[k] - unit * rate).norm();
        let se = (est.stderr[k].powi(2) + unit.norm_sqr() * rate_stderr.powi(2)).sqrt();
        let z = if resid == 0.0 {
            0.0
        } else if se > 0.0 {
            resid / se
        } else {
            f64::INFINITY
        };
        max_abs = max_abs.max(resid);
        if z > max_z {
            max_z = z;
            t_at_max = t;
        }
    }
    PoissonExponentCheck {
        rate,
        rate_stderr,
        max_z,
        max_abs,
        t_at_max,
        valid_points,
    }
}
