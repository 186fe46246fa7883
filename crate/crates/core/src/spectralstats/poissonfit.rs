use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size for a goodness-of-fit report.
pub const MIN_FIT_SAMPLES: usize = 1000;

/// Chi-square bins are merged until each expects at least this many counts.
const MIN_EXPECTED: f64 = 5.0;

/// Probability mass `P{X = k}` of Poisson(`lambda`).
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    let mut p = (-lambda).exp();
    for j in 1..=k {
        p *= lambda / j as f64;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonRow {
    pub k: u64,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFitReport {
    pub lambda: f64,
    pub samples: usize,
    pub mean: f64,
    pub tv_distance: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub table: Vec<PoissonRow>,
}

/// Total variation distance and chi-square statistic between the empirical
/// count distribution and Poisson(`lambda`).
pub fn poisson_fit_test(counts: &[u64], lambda: f64) -> Result<PoissonFitReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!(
            "Poisson rate must be positive, got {lambda}"
        )));
    }
    let n = counts.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::Insufficient(format!(
            "goodness of fit needs at least {MIN_FIT_SAMPLES} samples, got {n}"
        )));
    }
    let nf = n as f64;
    let kmax = *counts.iter().max().expect("nonempty");
    let mut observed = vec![0u64; kmax as usize + 1];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let pmf: Vec<f64> = (0..=kmax).map(|k| poisson_pmf(lambda, k)).collect();
    let covered: f64 = pmf.iter().sum();
    let tail = (1.0 - covered).max(0.0);

    let tv = 0.5
        * (observed
            .iter()
            .zip(&pmf)
            .map(|(&o, &p)| (o as f64 / nf - p).abs())
            .sum::<f64>()
            + tail);

    let table: Vec<PoissonRow> = (0..=kmax)
        .map(|k| PoissonRow {
            k,
            observed: observed[k as usize],
            expected: nf * pmf[k as usize],
        })
        .collect();

    // greedy left-to-right merging; the unobserved tail joins the last bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for row in &table {
        o_acc += row.observed as f64;
        e_acc += row.expected;
        if e_acc >= MIN_EXPECTED {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    e_acc += nf * tail;
    match bins.last_mut() {
        Some(last) if e_acc < MIN_EXPECTED => {
            last.0 += o_acc;
            last.1 += e_acc;
        }
        _ => bins.push((o_acc, e_acc)),
    }
    let chi_square = if bins.len() < 2 {
        0.0
    } else {
        bins.iter().map(|&(o, e)| (o - e).powi(2) / e).sum()
    };
    Ok(PoissonFitReport {
        lambda,
        samples: n,
        mean: counts.iter().sum::<u64>() as f64 / nf,
        tv_distance: tv,
        chi_square,
        dof: bins.len().saturating_sub(1),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn rejects_bad_input() {
        assert!(poisson_fit_test(&[0; 1000], 0.0).is_err());
        assert!(poisson_fit_test(&[0; 1000], -1.0).is_err());
        assert!(poisson_fit_test(&[0; 999], 1.0).is_err());
    }

    #[test]
    fn self_test() {
        // the distance of a 10^4 sample fluctuates around 0.005; average seeds
        let mut tv = 0.0;
        for seed in 0..8 {
            let mut s = Stream::new(seed);
            let counts: Vec<u64> = (0..10_000).map(|_| s.poisson(0.5)).collect();
            let r = poisson_fit_test(&counts, 0.5).unwrap();
            assert!(r.tv_distance < 0.02, "{r:?}");
            assert!(r.dof >= 1);
            tv += r.tv_distance / 8.0;
        }
        assert!(tv < 0.01, "mean distance {tv}");
    }

    #[test]
    fn point_mass_distance_is_exact() {
        let r = poisson_fit_test(&[1; 2000], 1.0).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert!((r.tv_distance - exact).abs() < 1e-12);
        assert!(r.tv_distance > 0.2);
        assert!(r.chi_square > 100.0);
    }

    #[test]
    fn pmf_sums_to_one() {
        let s: f64 = (0..60).map(|k| poisson_pmf(3.0, k)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
