use serde::{Deserialize, Serialize};

use super::semicircle::semicircle_density;
use crate::eigensolver::Spectrum;
use crate::error::{Error, Result};
use crate::fit::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Binning {
    /// Width `2 IQR n^{-1/3}` over the data range.
    #[default]
    FreedmanDiaconis,
    /// `bins` equal bins over the data range.
    Uniform { bins: usize },
    /// Explicit increasing bin edges.
    Edges { edges: Vec<f64> },
}

/// Histogram estimate of the eigenvalue density, normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDos {
    pub edges: Vec<f64>,
    /// Bin centres.
    pub grid: Vec<f64>,
    pub densities: Vec<f64>,
    pub n_half: usize,
    pub trials: usize,
}

impl EmpiricalDos {
    /// `sum density * width`.
    pub fn total_mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    /// Largest `|density - n_sc|` over bin centres in `[lo, hi]`.
    pub fn sup_distance_to_semicircle(&self, lo: f64, hi: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.densities)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, d)| (d - semicircle_density(*x)).abs())
            .fold(0.0, f64::max)
    }
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    (0..=bins).map(|k| lo + k as f64 * w).collect()
}

/// Pooled histogram of all eigenvalues, normalized by total count times width.
pub fn empirical_dos(spectra: &[Spectrum], binning: &Binning) -> Result<EmpiricalDos> {
    if spectra.is_empty() || spectra.iter().all(Spectrum::is_empty) {
        return Err(Error::Insufficient(
            "density estimate needs at least one spectrum".into(),
        ));
    }
    let mut all: Vec<f64> = spectra
        .iter()
        .flat_map(|s| s.eigenvalues.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let (min, max) = (all[0], all[n - 1]);
    let edges = match binning {
        Binning::FreedmanDiaconis => {
            let iqr = quantile_sorted(&all, 0.75) - quantile_sorted(&all, 0.25);
            let h = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
            if !(h > 0.0) || max - min <= 0.0 {
                let c = 0.5 * (min + max);
                vec![c - 0.5, c + 0.5]
            } else {
                let bins = (((max - min) / h).ceil() as usize).max(1);
                uniform_edges(min, min + bins as f64 * h, bins)
            }
        }
        Binning::Uniform { bins } => {
            if *bins == 0 {
                return Err(Error::config("uniform binning needs at least one bin"));
            }
            if max > min {
                uniform_edges(min, max, *bins)
            } else {
                uniform_edges(min - 0.5, min + 0.5, *bins)
            }
        }
        Binning::Edges { edges } => {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config(
                    "bin edges must be strictly increasing, at least two",
                ));
            }
            edges.clone()
        }
    };
    let nb = edges.len() - 1;
    let mut counts = vec![0u64; nb];
    let last = edges[nb];
    for &x in &all {
        if x < edges[0] || x > last {
            continue;
        }
        // half-open bins, the last one closed
        let k = edges.partition_point(|&e| e <= x).saturating_sub(1).min(nb - 1);
        counts[k] += 1;
    }
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (n as f64 * (e[1] - e[0])))
        .collect();
    let grid = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let len = spectra[0].len();
    Ok(EmpiricalDos {
        edges,
        grid,
        densities,
        n_half: len.saturating_sub(1) / 2,
        trials: spectra.len(),
    })
}
