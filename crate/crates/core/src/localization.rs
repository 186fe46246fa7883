//! Resolvent entries of band matrices and their fractional-moment decay.
//!
//! Resolvent columns come from a complex banded LU factorization of `H - z`
//! with partial pivoting. Rows are kept as windows of width `2b + 1` that are
//! realigned to the elimination column, which is enough because the upper
//! factor of a pivoted band LU has bandwidth at most `2b`. Periodic matrices
//! are factored in the folded ordering of [`SymBand::unfolded`].

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{BandMatrix, BandMatrixParams, SymBand};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, mean_stderr, median_of_means, LinearFit};
use crate::rng::derive_trial_seed;

/// Relative residual tolerance for resolvent columns.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Minimum trial count for a decay fit.
pub const MIN_DECAY_TRIALS: usize = 1000;

type C = Complex64;

/// LU factorization of `H - z` for a real symmetric band matrix `H`.
pub struct ResolventSolver<'a> {
    matrix: &'a SymBand,
    z: C,
    n: usize,
    b: usize,
    /// `pos[i]` is the position of index `i` in the factored ordering.
    pos: Option<Vec<usize>>,
    upper: Vec<C>,
    multipliers: Vec<C>,
    pivots: Vec<usize>,
    norm: f64,
}

impl<'a> ResolventSolver<'a> {
    pub fn new(matrix: &'a SymBand, z: C) -> Result<Self> {
        if !(z.im > 0.0) {
            return Err(Error::config(format!(
                "resolvent needs Im z > 0, got z = {} + {}i",
                z.re, z.im
            )));
        }
        let folded = matrix.unfolded();
        let n = folded.dim();
        let b = folded.bandwidth();
        let pos = matrix.is_periodic().then(|| {
            let mut pos = vec![0; n];
            for (p, i) in SymBand::fold_order(n).into_iter().enumerate() {
                pos[i] = p;
            }
            pos
        });
        let width = 2 * b + 1;
        // row q holds columns start[q] .. start[q] + width
        let mut rows = vec![C::new(0.0, 0.0); n * width];
        let mut start: Vec<usize> = (0..n).map(|q| q.saturating_sub(b)).collect();
        for q in 0..n {
            let lo = q.saturating_sub(b);
            let hi = (q + b).min(n - 1);
            for c in lo..=hi {
                let v = folded.get(q, c);
                rows[q * width + c - start[q]] = C::new(v, 0.0);
            }
            rows[q * width + q - start[q]] -= z;
        }
        let mut multipliers = vec![C::new(0.0, 0.0); n * b.max(1)];
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + b).min(n - 1);
            for q in k..=last {
                let shift = k - start[q];
                if shift > 0 {
                    let row = &mut rows[q * width..(q + 1) * width];
                    row.copy_within(shift.., 0);
                    row[width - shift..].fill(C::new(0.0, 0.0));
                    start[q] = k;
                }
            }
            let mut p = k;
            let mut best = rows[k * width].norm();
            for q in k + 1..=last {
                let v = rows[q * width].norm();
                if v > best {
                    best = v;
                    p = q;
                }
            }
            if !(best > 0.0) {
                return Err(Error::Numerical {
                    index: k,
                    message: "zero pivot in banded LU".into(),
                });
            }
            pivots[k] = p;
            if p != k {
                for c in 0..width {
                    rows.swap(k * width + c, p * width + c);
                }
            }
            let (head, tail) = rows.split_at_mut((k + 1) * width);
            let pivot_row = &head[k * width..];
            let inv = C::new(1.0, 0.0) / pivot_row[0];
            for q in k + 1..=last {
                let row = &mut tail[(q - k - 1) * width..(q - k) * width];
                let l = row[0] * inv;
                multipliers[k * b.max(1) + (q - k - 1)] = l;
                row[0] = C::new(0.0, 0.0);
                if l != C::new(0.0, 0.0) {
                    for c in 1..width {
                        row[c] -= l * pivot_row[c];
                    }
                }
            }
        }
        let norm = inf_norm(matrix);
        Ok(ResolventSolver {
            matrix,
            z,
            n,
            b,
            pos,
            upper: rows,
            multipliers,
            pivots,
            norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn z(&self) -> C {
        self.z
    }

    /// Solve `(H - z) x = rhs` in the original ordering.
    pub fn solve(&self, rhs: &[C]) -> Vec<C> {
        let n = self.n;
        let b = self.b;
        let width = 2 * b + 1;
        let mut y: Vec<C> = match &self.pos {
            None => rhs.to_vec(),
            Some(pos) => {
                let mut y = vec![C::new(0.0, 0.0); n];
                for (i, &p) in pos.iter().enumerate() {
                    y[p] = rhs[i];
                }
                y
            }
        };
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk == C::new(0.0, 0.0) {
                continue;
            }
            let last = (k + b).min(n - 1);
            for q in k + 1..=last {
                y[q] -= self.multipliers[k * b.max(1) + (q - k - 1)] * yk;
            }
        }
        for k in (0..n).rev() {
            let row = &self.upper[k * width..(k + 1) * width];
            let mut acc = y[k];
            let last = (k + 2 * b).min(n - 1);
            for c in k + 1..=last {
                acc -= row[c - k] * y[c];
            }
            y[k] = acc / row[0];
        }
        match &self.pos {
            None => y,
            Some(pos) => pos.iter().map(|&p| y[p]).collect(),
        }
    }

    /// Column `j` of the resolvent, without a residual check.
    pub fn column_unchecked(&self, j: usize) -> Vec<C> {
        let mut e = vec![C::new(0.0, 0.0); self.n];
        e[j] = C::new(1.0, 0.0);
        self.solve(&e)
    }

    /// Column `j` of the resolvent with the residual bound enforced.
    pub fn column(&self, j: usize) -> Result<Vec<C>> {
        if j >= self.n {
            return Err(Error::config(format!("index {j} outside 0..{}", self.n)));
        }
        let x = self.column_unchecked(j);
        let r = self.residual(&x, j);
        let bound = RESIDUAL_TOLERANCE * (self.norm + self.z.norm());
        if !(r <= bound) {
            return Err(Error::Numerical {
                index: j,
                message: format!("resolvent residual {r:e} exceeds {bound:e}"),
            });
        }
        Ok(x)
    }

    /// `|| (H - z) x - e_j ||_inf`.
    pub fn residual(&self, x: &[C], j: usize) -> f64 {
        let mut r: Vec<C> = x.iter().map(|v| -self.z * v).collect();
        for (i, k, v) in self.matrix.stored_entries() {
            r[i] += x[k] * v;
            if i != k {
                r[k] += x[i] * v;
            }
        }
        r[j] -= C::new(1.0, 0.0);
        r.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

fn inf_norm(m: &SymBand) -> f64 {
    let mut rows = vec![0.0; m.dim()];
    for (i, j, v) in m.stored_entries() {
        rows[i] += v.abs();
        if i != j {
            rows[j] += v.abs();
        }
    }
    rows.into_iter().fold(0.0, f64::max)
}

/// Column `j` (0-based position) of `(H - z)^{-1}`.
pub fn greens_column(m: &BandMatrix, j: usize, z: C) -> Result<Vec<C>> {
    ResolventSolver::new(m.band(), z)?.column(j)
}

/// `|G(j, k; z)|^s` for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensProbe {
    pub z: C,
    pub s: f64,
    pub row: usize,
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

/// Fractional powers of one resolvent row at the given columns.
pub fn greens_probe(m: &BandMatrix, j: usize, columns: &[usize], z: C, s: f64) -> Result<GreensProbe> {
    check_power(s)?;
    let g = greens_column(m, j, z)?;
    let values = columns
        .iter()
        .map(|&k| {
            g.get(k)
                .map(|v| v.norm().powf(s))
                .ok_or_else(|| Error::config(format!("column {k} outside the matrix")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GreensProbe {
        z,
        s,
        row: j,
        columns: columns.to_vec(),
        values,
    })
}

fn check_power(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::config(format!(
            "fractional power s must lie in (0, 1), got {s}"
        )));
    }
    Ok(())
}

/// How sample moments are combined across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentEstimator {
    #[default]
    Mean,
    MedianOfMeans {
        groups: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayStatus {
    Ok,
    /// Fitted slope is not negative.
    NonPositiveRate,
    /// Fewer than two usable distances beyond `2W`.
    InsufficientRange,
    /// No off-diagonal coupling: every moment beyond the diagonal vanishes.
    Decoupled,
}

/// Options of [`fractional_moment_decay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub energy: f64,
    /// Imaginary part of `z`; `None` means `1/N`.
    pub epsilon: Option<f64>,
    pub s: f64,
    /// Source position; `None` means the centre `N`.
    pub row: Option<usize>,
    pub distances: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub estimator: MomentEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub n_half: usize,
    pub alpha: f64,
    pub s: f64,
    pub energy: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub distances: Vec<usize>,
    pub moments: Vec<f64>,
    pub moment_stderr: Vec<f64>,
    pub log_moments: Vec<f64>,
    pub log_stderr: Vec<f64>,
    /// Decay rate in 1/index; `+inf` for decoupled sites.
    pub rate: f64,
    pub rate_stderr: f64,
    pub loc_length: f64,
    pub intercept: f64,
    pub prefactor_exponent: f64,
    pub r_squared: f64,
    pub tail_start: usize,
    pub tail_points: usize,
    pub status: DecayStatus,
}

/// Source position, imaginary part and checks shared by the decay routines.
fn decay_setup(params: &BandMatrixParams, opts: &DecayOptions) -> Result<(usize, f64)> {
    params.validate()?;
    check_power(opts.s)?;
    if opts.distances.is_empty() {
        return Err(Error::config("empty distance grid"));
    }
    let n_half = params.n_half;
    let n = params.dimension();
    let eps = opts.epsilon.unwrap_or(1.0 / n_half.max(1) as f64);
    if !(eps > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {eps}")));
    }
    let j = opts.row.unwrap_or(n_half);
    let dmax = *opts.distances.iter().max().expect("nonempty");
    if j >= n || j < dmax || j + dmax >= n {
        return Err(Error::config(format!(
            "source {j} must be at least {dmax} away from both edges of 0..{n}"
        )));
    }
    Ok((j, eps))
}

/// Check the options of a decay study without sampling.
pub fn validate_decay(params: &BandMatrixParams, opts: &DecayOptions) -> Result<()> {
    decay_setup(params, opts)?;
    if opts.trials < MIN_DECAY_TRIALS {
        return Err(Error::config(format!(
            "decay fit needs at least {MIN_DECAY_TRIALS} trials, got {}",
            opts.trials
        )));
    }
    Ok(())
}

/// `|G(j, j +- d)|^s` on the distance grid for the matrix seeded by
/// `params.seed`; both sides are averaged for non-periodic matrices.
pub fn decay_trial(params: &BandMatrixParams, opts: &DecayOptions) -> Result<Vec<f64>> {
    let (j, eps) = decay_setup(params, opts)?;
    let m = BandMatrix::sample(params)?;
    let g = greens_column(&m, j, C::new(opts.energy, eps))?;
    let s = opts.s;
    Ok(opts
        .distances
        .iter()
        .map(|&d| {
            if d == 0 {
                g[j].norm().powf(s)
            } else if params.periodic {
                g[j + d].norm().powf(s)
            } else {
                0.5 * (g[j + d].norm().powf(s) + g[j - d].norm().powf(s))
            }
        })
        .collect())
}

/// Monte Carlo estimate of `E |G(j, j +- d; E + i eps)|^s` on a distance grid
/// and a weighted exponential fit of its tail beyond `2W`. Trial `t` uses the
/// matrix seed `derive_trial_seed(params.seed, 0, t)`.
pub fn fractional_moment_decay(params: &BandMatrixParams, opts: &DecayOptions) -> Result<DecayFit> {
    validate_decay(params, opts)?;
    let samples = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let p = params
                .clone()
                .with_seed(derive_trial_seed(params.seed, 0, t as u64));
            decay_trial(&p, opts)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    fit_decay(params, opts, &samples)
}

/// Moments and tail fit from per-trial samples of [`decay_trial`].
pub fn fit_decay(params: &BandMatrixParams, opts: &DecayOptions, samples: &[Vec<f64>]) -> Result<DecayFit> {
    let (_, eps) = decay_setup(params, opts)?;
    if samples.is_empty() {
        return Err(Error::Insufficient("decay fit needs samples".into()));
    }
    let n_half = params.n_half;
    let s = opts.s;
    let nd = opts.distances.len();
    let mut moments = Vec::with_capacity(nd);
    let mut moment_stderr = Vec::with_capacity(nd);
    let mut column = vec![0.0; samples.len()];
    for k in 0..nd {
        for (c, row) in column.iter_mut().zip(samples) {
            *c = row[k];
        }
        let (m, se) = match opts.estimator {
            MomentEstimator::Mean => mean_stderr(&column),
            MomentEstimator::MedianOfMeans { groups } => median_of_means(&column, groups),
        };
        moments.push(m);
        moment_stderr.push(se);
    }
    let log_moments: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let log_stderr: Vec<f64> = moments
        .iter()
        .zip(&moment_stderr)
        .map(|(m, se)| if *m > 0.0 { se / m } else { f64::INFINITY })
        .collect();

    let w = params.band_width();
    let tail_start = 2 * w;
    let alpha = params.alpha;
    let mut fit = DecayFit {
        n_half,
        alpha,
        s,
        energy: opts.energy,
        epsilon: eps,
        trials: samples.len(),
        distances: opts.distances.clone(),
        moments,
        moment_stderr,
        log_moments,
        log_stderr,
        rate: f64::NAN,
        rate_stderr: f64::NAN,
        loc_length: f64::NAN,
        intercept: f64::NAN,
        prefactor_exponent: f64::NAN,
        r_squared: f64::NAN,
        tail_start,
        tail_points: 0,
        status: DecayStatus::InsufficientRange,
    };
    if params.half_band == 0 {
        fit.rate = f64::INFINITY;
        fit.loc_length = 0.0;
        fit.status = DecayStatus::Decoupled;
        return Ok(fit);
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut wts = Vec::new();
    for k in 0..nd {
        let d = fit.distances[k];
        if d > tail_start && fit.moments[k] > 0.0 && fit.log_stderr[k].is_finite() {
            x.push(d as f64);
            y.push(fit.log_moments[k]);
            let se = fit.log_stderr[k].max(1e-12);
            wts.push(1.0 / (se * se));
        }
    }
    fit.tail_points = x.len();
    let Some(lf) = linear_fit(&x, &y, Some(&wts)) else {
        return Ok(fit);
    };
    apply_fit(&mut fit, &lf);
    Ok(fit)
}

fn apply_fit(fit: &mut DecayFit, lf: &LinearFit) {
    fit.rate = -lf.slope;
    fit.rate_stderr = lf.slope_stderr;
    fit.intercept = lf.intercept;
    fit.r_squared = lf.r_squared;
    let ln_n = (fit.n_half as f64).ln();
    fit.prefactor_exponent = if fit.alpha > 0.0 && ln_n > 0.0 {
        lf.intercept / (fit.s * fit.alpha * ln_n)
    } else {
        f64::NAN
    };
    if fit.rate > 0.0 {
        fit.loc_length = 1.0 / fit.rate;
        fit.status = DecayStatus::Ok;
    } else {
        fit.status = DecayStatus::NonPositiveRate;
    }
}

/// Localization length relative to the system half-size, `loc_length / N`.
pub fn kappa_ratio(loc_length: f64, n_half: usize) -> Result<f64> {
    if !(loc_length > 0.0) {
        return Err(Error::config(format!(
            "localization length must be positive, got {loc_length}"
        )));
    }
    Ok(loc_length / n_half as f64)
}

/// Regression of `ln loc_length` on `ln N`; the slope estimates the product
/// of the localization exponent with the band exponent.
pub fn localization_scaling(points: &[(usize, f64)]) -> Option<LinearFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, l)| *n > 0 && *l > 0.0 && l.is_finite())
        .map(|&(n, l)| ((n as f64).ln(), l.ln()))
        .collect();
    let x: Vec<f64> = usable.iter().map(|p| p.0).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.1).collect();
    linear_fit(&x, &y, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EntryDistribution;

    fn dense_inverse(m: &SymBand, z: C) -> Vec<C> {
        // Gauss-Jordan with partial pivoting on the dense complex matrix
        let n = m.dim();
        let d = m.to_dense();
        let mut a: Vec<C> = d.iter().map(|&v| C::new(v, 0.0)).collect();
        for i in 0..n {
            a[i * n + i] -= z;
        }
        let mut inv = vec![C::new(0.0, 0.0); n * n];
        for i in 0..n {
            inv[i * n + i] = C::new(1.0, 0.0);
        }
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].norm().total_cmp(&a[y * n + k].norm()))
                .unwrap();
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
                inv.swap(k * n + c, p * n + c);
            }
            let piv = a[k * n + k];
            for c in 0..n {
                a[k * n + c] /= piv;
                inv[k * n + c] /= piv;
            }
            for r in 0..n {
                if r != k {
                    let f = a[r * n + k];
                    for c in 0..n {
                        let (ak, ik) = (a[k * n + c], inv[k * n + c]);
                        a[r * n + c] -= f * ak;
                        inv[r * n + c] -= f * ik;
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn zero_matrix() {
        let m = SymBand::zeros(5, 1, false);
        let s = ResolventSolver::new(&m, C::new(0.0, 1.0)).unwrap();
        let g = s.column(2).unwrap();
        assert!((g[2] - C::new(0.0, 1.0)).norm() < 1e-15);
        assert!(g.iter().enumerate().all(|(k, v)| k == 2 || v.norm() == 0.0));
    }

    #[test]
    fn diagonal_matrix() {
        let d = [0.3, -1.0, 2.0, 0.0];
        let m = SymBand::from_diagonal(&d);
        let z = C::new(0.1, 0.5);
        let s = ResolventSolver::new(&m, z).unwrap();
        for j in 0..4 {
            let g = s.column(j).unwrap();
            for k in 0..4 {
                let expect = if j == k {
                    C::new(1.0, 0.0) / (d[j] - z)
                } else {
                    C::new(0.0, 0.0)
                };
                assert!((g[k] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_dense_inverse() {
        for (periodic, seed) in [(false, 1u64), (true, 2), (false, 3)] {
            let m = SymBand::sample(61, 3, periodic, &EntryDistribution::StandardGaussian, seed);
            let z = C::new(0.2, 0.05);
            let inv = dense_inverse(&m, z);
            let s = ResolventSolver::new(&m, z).unwrap();
            for j in [0, 7, 30, 60] {
                let g = s.column(j).unwrap();
                for k in 0..61 {
                    assert!(
                        (g[k] - inv[k * 61 + j]).norm() < 1e-9,
                        "periodic {periodic} j {j} k {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_real_z() {
        let m = SymBand::zeros(3, 0, false);
        assert!(ResolventSolver::new(&m, C::new(0.0, 0.0)).is_err());
        assert!(ResolventSolver::new(&m, C::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn kappa() {
        assert_eq!(kappa_ratio(1000.0, 1000).unwrap(), 1.0);
        assert!((kappa_ratio(100.0, 10_000).unwrap() - 0.01).abs() < 1e-15);
        assert!(kappa_ratio(0.0, 10).is_err());
    }

    #[test]
    fn decoupled_sites() {
        let p = BandMatrixParams::from_half_band(40, 0).unwrap().with_seed(4);
        let fit = fractional_moment_decay(
            &p,
            &DecayOptions {
                energy: 0.0,
                epsilon: None,
                s: 0.5,
                row: None,
                distances: vec![0, 1, 5, 10],
                trials: 1000,
                estimator: MomentEstimator::Mean,
            },
        )
        .unwrap();
        assert_eq!(fit.status, DecayStatus::Decoupled);
        assert_eq!(fit.rate, f64::INFINITY);
        assert!(fit.moments[0] > 0.0);
        assert!(fit.moments[1..].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn scaling_slope() {
        let pts: Vec<(usize, f64)> = [500usize, 1000, 2000, 4000]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(0.4)))
            .collect();
        let f = localization_scaling(&pts).unwrap();
        assert!((f.slope - 0.4).abs() < 1e-12);
    }
}
