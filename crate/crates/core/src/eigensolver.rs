//! Symmetric band eigenvalue machinery.
//!
//! * [`reduce_to_tridiagonal`]: Givens band reduction (one diagonal at a
//!   time, bulges chased off the end of the band). Work `O(n^2 b)`, storage
//!   `O(n b)`; no dense `n x n` array is formed. Periodic matrices are first
//!   permuted into a non-periodic band of at most twice the half bandwidth.
//! * [`eigenvalues_all`]: implicit QL with Wilkinson shifts, eigenvalues only.
//!   Deflation when `|e_k| <= eps (|d_k| + |d_{k+1}|)`; at most 50 sweeps per
//!   eigenvalue.
//! * [`sturm_count`] / [`count_in_interval`]: exact integer counts from the
//!   signs of the shifted `LDL^T` pivots of the tridiagonal.
//! * [`BandCounter`]: the same inertia count computed directly on the band
//!   (`O(n b^2)` per shift). When a pivot is smaller than
//!   `1e-8 * max(1, max|a_ij| + |x|)` the counter switches to the tridiagonal
//!   route for that matrix.
//!
//! Counting convention: `count(x) = #{ lambda <= x }`; a zero pivot is replaced
//! by `-pivmin` (`pivmin = f64::MIN_POSITIVE * max(1, max e_k^2)`), so an
//! eigenvalue exactly at `x` is counted. Interval counts are over `(a, b]`.

use serde::{Deserialize, Serialize};

use crate::ensemble::{BandMatrix, BandMatrixParams, SymBand};
use crate::error::{Error, Result};

/// Iteration cap per eigenvalue in the QL sweep.
pub const QL_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(Error::config(format!(
                "tridiagonal needs n >= 1 diagonal and n-1 off-diagonal entries (got {} and {})",
                diag.len(),
                offdiag.len()
            )));
        }
        Ok(Tridiagonal { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin interval of the tridiagonal.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.offdiag[i - 1].abs();
            }
            if i + 1 < n {
                r += self.offdiag[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }
}

/// Sorted eigenvalues with optional provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub params: Option<BandMatrixParams>,
}

impl Spectrum {
    pub fn from_sorted(eigenvalues: Vec<f64>) -> Self {
        debug_assert!(eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        Spectrum {
            eigenvalues,
            params: None,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `#{ j : a < E_j <= b }` by binary search.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        if !(a < b) {
            return 0;
        }
        let hi = self.eigenvalues.partition_point(|&e| e <= b);
        let lo = self.eigenvalues.partition_point(|&e| e <= a);
        hi - lo
    }

    /// Eigenvalues in `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> &[f64] {
        let lo = self.eigenvalues.partition_point(|&e| e < a);
        let hi = self.eigenvalues.partition_point(|&e| e <= b);
        &self.eigenvalues[lo..hi.max(lo)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalCount {
    pub a: f64,
    pub b: f64,
    pub count: usize,
}

/// Givens reduction of a symmetric band matrix to tridiagonal form.
pub fn reduce_to_tridiagonal(m: &SymBand) -> Tridiagonal {
    let a = m.unfolded();
    let n = a.dim();
    let b = a.bandwidth();
    let raw = a.raw();
    if b <= 1 {
        let diag = raw[..n].to_vec();
        let offdiag = if b == 1 {
            raw[n + 1..2 * n].to_vec()
        } else {
            vec![0.0; n - 1]
        };
        return Tridiagonal { diag, offdiag };
    }

    // Row-major lower storage with room for one bulge diagonal:
    // A(i, j) (0 <= i-j <= b+1) lives at i*s + (b+1) - (i-j).
    let s = b + 2;
    let mut w = vec![0.0; n * s];
    for d in 0..=b {
        for i in d..n {
            w[i * s + (b + 1) - d] = raw[d * n + i];
        }
    }
    let at = |i: usize, j: usize| i * s + (b + 1) + j - i;

    for d in (2..=b).rev() {
        for j in 0..n - d {
            let mut col = j;
            let mut p = j + d - 1;
            loop {
                let q = p + 1;
                let y = w[at(q, col)];
                if y == 0.0 {
                    break;
                }
                let x = w[at(p, col)];
                let r = x.hypot(y);
                let (c, sn) = (x / r, y / r);
                w[at(p, col)] = r;
                w[at(q, col)] = 0.0;

                // rows p and q, columns col+1 .. p-1 (contiguous in each row)
                if col + 1 < p {
                    let len = p - col - 1;
                    let (head, tail) = w.split_at_mut(q * s);
                    let rp = &mut head[at(p, col + 1)..at(p, col + 1) + len];
                    let off = at(q, col + 1) - q * s;
                    let rq = &mut tail[off..off + len];
                    for (xp, xq) in rp.iter_mut().zip(rq.iter_mut()) {
                        let (u, v) = (*xp, *xq);
                        *xp = c * u + sn * v;
                        *xq = c * v - sn * u;
                    }
                }

                let app = w[at(p, p)];
                let aqp = w[at(q, p)];
                let aqq = w[at(q, q)];
                let (cc, ss, cs) = (c * c, sn * sn, c * sn);
                w[at(p, p)] = cc * app + 2.0 * cs * aqp + ss * aqq;
                w[at(q, q)] = ss * app - 2.0 * cs * aqp + cc * aqq;
                w[at(q, p)] = cs * (aqq - app) + (cc - ss) * aqp;

                // rows below q, columns p and q (adjacent pairs)
                let last = (q + d).min(n - 1);
                for i in q + 1..=last {
                    let k = at(i, p);
                    let (u, v) = (w[k], w[k + 1]);
                    w[k] = c * u + sn * v;
                    w[k + 1] = c * v - sn * u;
                }

                if q + d >= n {
                    break;
                }
                // bulge at (q+d, p): annihilate with the plane (q+d-1, q+d)
                col = p;
                p = q + d - 1;
            }
        }
    }

    let diag = (0..n).map(|i| w[at(i, i)]).collect();
    let offdiag = (0..n - 1).map(|i| w[at(i + 1, i)]).collect();
    Tridiagonal { diag, offdiag }
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending.
pub fn eigenvalues_all(t: &Tridiagonal) -> Result<Spectrum> {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() < f64::MIN_POSITIVE {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::Numerical {
                    index: l,
                    message: format!("QL iteration did not converge after {QL_MAX_SWEEPS} sweeps"),
                });
            }
            // Wilkinson shift from the leading 2x2 block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let bb = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * bb;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - bb;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(Spectrum::from_sorted(d))
}

/// Full spectrum of a band matrix realization.
pub fn spectrum_of(m: &BandMatrix) -> Result<Spectrum> {
    let mut s = eigenvalues_all(&reduce_to_tridiagonal(m.band()))?;
    s.params = Some(m.params.clone());
    Ok(s)
}

/// `#{ lambda <= x }` from the Sturm sequence of `t - x I`.
pub fn sturm_count(t: &Tridiagonal, x: f64) -> usize {
    let emax2 = t.offdiag.iter().fold(0.0f64, |m, v| m.max(v * v));
    let pivmin = f64::MIN_POSITIVE * emax2.max(1.0);
    let mut count = 0;
    let mut q = t.diag[0] - x;
    if q.abs() <= pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..t.dim() {
        let e = t.offdiag[i - 1];
        q = (t.diag[i] - x) - e * e / q;
        if q.abs() <= pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Exact count of eigenvalues in `(a, b]`.
pub fn count_in_interval(t: &Tridiagonal, a: f64, b: f64) -> Result<IntervalCount> {
    if !(a < b) {
        return Err(Error::config(format!(
            "interval needs a < b (got a = {a}, b = {b})"
        )));
    }
    let count = sturm_count(t, b) - sturm_count(t, a);
    Ok(IntervalCount { a, b, count })
}

/// Inertia-based eigenvalue counter working on the band storage.
pub struct BandCounter<'a> {
    band: std::borrow::Cow<'a, SymBand>,
    work: Vec<f64>,
    col: Vec<f64>,
    scale: f64,
    tri: Option<Tridiagonal>,
    fallbacks: usize,
}

impl<'a> BandCounter<'a> {
    pub fn new(m: &'a SymBand) -> Self {
        let band = m.unfolded();
        let scale = band.max_abs();
        let b = band.bandwidth();
        let n = band.dim();
        BandCounter {
            band,
            work: vec![0.0; n * (b + 1)],
            col: vec![0.0; b],
            scale,
            tri: None,
            fallbacks: 0,
        }
    }

    /// Number of shifts that were resolved on the tridiagonal route.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn dim(&self) -> usize {
        self.band.dim()
    }

    /// `#{ lambda <= x }`.
    pub fn count_le(&mut self, x: f64) -> usize {
        if let Some(t) = &self.tri {
            return sturm_count(t, x);
        }
        match self.inertia(x) {
            Some(c) => c,
            None => {
                self.fallbacks += 1;
                let t = reduce_to_tridiagonal(&self.band);
                let c = sturm_count(&t, x);
                self.tri = Some(t);
                c
            }
        }
    }

    pub fn count_in(&mut self, a: f64, b: f64) -> Result<IntervalCount> {
        if !(a < b) {
            return Err(Error::config(format!(
                "interval needs a < b (got a = {a}, b = {b})"
            )));
        }
        let count = self.count_le(b) - self.count_le(a);
        Ok(IntervalCount { a, b, count })
    }

    /// Negative pivots of `LDL^T = A - x I` without pivoting; `None` when a
    /// pivot falls under the tolerance.
    fn inertia(&mut self, x: f64) -> Option<usize> {
        let n = self.band.dim();
        let b = self.band.bandwidth();
        let raw = self.band.raw();
        let s = b + 1;
        // A(i, j) at i*s + b - (i-j)
        for d in 0..=b {
            for i in d..n {
                self.work[i * s + b - d] = raw[d * n + i];
            }
        }
        for i in 0..n {
            self.work[i * s + b] -= x;
        }
        let tol = 1e-8 * (self.scale + x.abs()).max(1.0);
        let w = &mut self.work;
        let mut negatives = 0;
        for k in 0..n {
            let dk = w[k * s + b];
            if !(dk.abs() > tol) {
                return None;
            }
            if dk < 0.0 {
                negatives += 1;
            }
            let m = b.min(n - 1 - k);
            for t in 0..m {
                let i = k + 1 + t;
                self.col[t] = w[i * s + b - (i - k)];
            }
            for t in 0..m {
                let i = k + 1 + t;
                let li = self.col[t] / dk;
                if li == 0.0 {
                    continue;
                }
                // A(i, k+1 ..= i) -= li * col[0 ..= t]
                let start = i * s + b - (i - k - 1);
                let row = &mut w[start..=start + t];
                for (r, c) in row.iter_mut().zip(&self.col[..=t]) {
                    *r -= li * c;
                }
            }
        }
        Some(negatives)
    }
}
