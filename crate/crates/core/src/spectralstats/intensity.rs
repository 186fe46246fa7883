use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::les::{RescaleWindow, Unfolding};
use super::semicircle::semicircle_measure;
use crate::eigensolver::BandCounter;
use crate::ensemble::{BandMatrix, BandMatrixParams};
use crate::error::{Error, Result};
use crate::fit::mean_stderr;
use crate::rng::derive_trial_seed;

/// Quadrature over `E0` needs at least this many midpoint nodes.
pub const MIN_QUADRATURE_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub window: RescaleWindow,
    pub n_half: usize,
    pub b_n: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Matrix of trial `t`: the parameter seed is the master seed of the family.
pub(crate) fn trial_matrix(params: &BandMatrixParams, t: usize) -> Result<BandMatrix> {
    let p = params
        .clone()
        .with_seed(derive_trial_seed(params.seed, 0, t as u64));
    BandMatrix::sample(&p)
}

/// Monte Carlo mean of the window count over `trials` independent matrices.
pub fn intensity_bn(
    w: &RescaleWindow,
    params: &BandMatrixParams,
    trials: usize,
) -> Result<IntensityEstimate> {
    if trials == 0 {
        return Err(Error::config("intensity needs trials >= 1"));
    }
    params.validate()?;
    let n_half = params.n_half;
    if w.is_empty() {
        return Ok(IntensityEstimate {
            window: *w,
            n_half,
            b_n: 0.0,
            stderr: 0.0,
            trials,
        });
    }
    let (a, b) = w.physical(n_half)?;
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = trial_matrix(params, t)?;
            let mut counter = BandCounter::new(m.band());
            Ok(counter.count_in(a, b)?.count as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (b_n, stderr) = mean_stderr(&counts);
    Ok(IntensityEstimate {
        window: *w,
        n_half,
        b_n,
        stderr,
        trials,
    })
}

/// Intensity integrated over the centre energy, with its limiting value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedIntensity {
    pub energy_range: (f64, f64),
    pub window: (f64, f64),
    pub nodes: usize,
    pub trials: usize,
    pub value: f64,
    pub stderr: f64,
    /// `|I| N_sc(J)`.
    pub reference: f64,
}

/// Midpoint quadrature over `E0 in J` of the window count; each trial uses one
/// matrix for every node, and the error bar comes from per-trial integrals.
pub fn intensity_integrated(
    energy_range: (f64, f64),
    window: (f64, f64),
    unfolding: Unfolding,
    params: &BandMatrixParams,
    nodes: usize,
    trials: usize,
) -> Result<IntegratedIntensity> {
    let (ja, jb) = energy_range;
    if !(ja >= -2.0 && jb <= 2.0 && ja < jb) {
        return Err(Error::config(format!(
            "energy range must satisfy -2 <= a < b <= 2, got [{ja}, {jb}]"
        )));
    }
    if nodes < MIN_QUADRATURE_NODES {
        return Err(Error::config(format!(
            "energy grid too coarse: {nodes} nodes, need at least {MIN_QUADRATURE_NODES}"
        )));
    }
    if trials == 0 {
        return Err(Error::config("intensity needs trials >= 1"));
    }
    params.validate()?;
    let h = (jb - ja) / nodes as f64;
    let windows = (0..nodes)
        .map(|k| {
            let e0 = ja + (k as f64 + 0.5) * h;
            let w = RescaleWindow::new(e0, window.0, window.1)?.with_unfolding(unfolding);
            if w.is_empty() {
                Ok(None)
            } else {
                w.physical(params.n_half).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = (window.1 - window.0) * semicircle_measure(ja, jb);
    if windows.iter().all(Option::is_none) {
        return Ok(IntegratedIntensity {
            energy_range,
            window,
            nodes,
            trials,
            value: 0.0,
            stderr: 0.0,
            reference,
        });
    }
    let integrals = (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = trial_matrix(params, t)?;
            let mut counter = BandCounter::new(m.band());
            let mut sum = 0.0;
            for (a, b) in windows.iter().flatten() {
                sum += counter.count_in(*a, *b)?.count as f64;
            }
            Ok(sum * h)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, stderr) = mean_stderr(&integrals);
    Ok(IntegratedIntensity {
        energy_range,
        window,
        nodes,
        trials,
        value,
        stderr,
        reference,
    })
}
