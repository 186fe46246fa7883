//! Random band matrix ensemble.
//!
//! A realization of size `2N+1` has entries `omega_ij / sqrt(2L+1)` when the
//! band distance of `(i, j)` is at most `L` and zero otherwise, with
//! `omega_ij = omega_ji` iid of mean zero and variance one. The band distance
//! is `|i-j|` or, for periodic matrices, the cyclic distance
//! `min(|i-j|, n-|i-j|)`.
//!
//! # Storage
//!
//! [`SymBand`] keeps the lower triangle as `L+1` diagonals of length `n`:
//! slot `data[d*n + i]` holds `A(i, i-d)` for `i >= d`. Slots with `i < d`
//! are zero for non-periodic matrices; for periodic matrices they hold the
//! wrap-around entry `A(i, i-d+n)`.
//!
//! # Draw order
//!
//! Entries are drawn row by row (`i = 0..n`), and within a row from the
//! outermost diagonal inwards (`d = L, L-1, ..., 0`), skipping slots that do
//! not exist in the non-periodic case. One raw variate is consumed per stored
//! entry; see [`crate::rng`] for the variate definitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Law of the raw entries `omega_ij`. Every variant has mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EntryDistribution {
    #[default]
    #[serde(alias = "gaussian", alias = "normal")]
    StandardGaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    #[serde(alias = "uniform")]
    UniformScaled,
    /// `+1` or `-1` with probability one half.
    Rademacher,
    /// Piecewise-constant density on `[lo, hi]` with equal-width cells carrying
    /// the given nonnegative weights, standardized to mean 0 and variance 1.
    CustomDensity { lo: f64, hi: f64, weights: Vec<f64> },
}

impl EntryDistribution {
    pub fn tag(&self) -> u8 {
        match self {
            EntryDistribution::StandardGaussian => 0,
            EntryDistribution::UniformScaled => 1,
            EntryDistribution::Rademacher => 2,
            EntryDistribution::CustomDensity { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntryDistribution::StandardGaussian => "standard-gaussian",
            EntryDistribution::UniformScaled => "uniform-scaled",
            EntryDistribution::Rademacher => "rademacher",
            EntryDistribution::CustomDensity { .. } => "custom-density",
        }
    }

    /// Parse the short names used on the command line.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" | "normal" | "standard-gaussian" => Ok(Self::StandardGaussian),
            "uniform" | "uniform-scaled" => Ok(Self::UniformScaled),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::config(format!(
                "unknown distribution '{other}' (expected gaussian, uniform or rademacher)"
            ))),
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match self {
            EntryDistribution::CustomDensity { lo, hi, weights } => {
                let mut p = vec![*lo, *hi];
                p.extend_from_slice(weights);
                p
            }
            _ => Vec::new(),
        }
    }

    pub fn from_tag(tag: u8, params: &[f64]) -> Result<Self> {
        match tag {
            0 => Ok(Self::StandardGaussian),
            1 => Ok(Self::UniformScaled),
            2 => Ok(Self::Rademacher),
            3 if params.len() >= 3 => Ok(Self::CustomDensity {
                lo: params[0],
                hi: params[1],
                weights: params[2..].to_vec(),
            }),
            _ => Err(Error::Decode(format!("bad distribution tag {tag}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EntryDistribution::CustomDensity { lo, hi, weights } = self {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config("custom density needs finite lo < hi"));
            }
            if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::config(
                    "custom density weights must be finite and nonnegative",
                ));
            }
            let piecewise = Piecewise::new(*lo, *hi, weights);
            if !(piecewise.sd > 0.0) {
                return Err(Error::config("custom density has zero variance"));
            }
        }
        Ok(())
    }

    pub(crate) fn sampler(&self) -> Sampler {
        match self {
            EntryDistribution::StandardGaussian => Sampler::Gaussian,
            EntryDistribution::UniformScaled => Sampler::Uniform,
            EntryDistribution::Rademacher => Sampler::Rademacher,
            EntryDistribution::CustomDensity { lo, hi, weights } => {
                Sampler::Custom(Piecewise::new(*lo, *hi, weights))
            }
        }
    }
}

/// Standardized piecewise-constant density sampled by inversion.
#[derive(Debug, Clone)]
pub(crate) struct Piecewise {
    lo: f64,
    width: f64,
    cdf: Vec<f64>,
    mean: f64,
    sd: f64,
}

impl Piecewise {
    fn new(lo: f64, hi: f64, weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let width = (hi - lo) / weights.len() as f64;
        let mut cdf = Vec::with_capacity(weights.len());
        let (mut acc, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (k, w) in weights.iter().enumerate() {
            let p = w / total;
            let a = lo + k as f64 * width;
            let b = a + width;
            acc += p;
            cdf.push(acc);
            m1 += p * (a + b) / 2.0;
            m2 += p * (a * a + a * b + b * b) / 3.0;
        }
        let sd = (m2 - m1 * m1).max(0.0).sqrt();
        Piecewise {
            lo,
            width,
            cdf,
            mean: m1,
            sd,
        }
    }

    fn sample(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let start = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        let p = self.cdf[k] - start;
        let frac = if p > 0.0 { (u - start) / p } else { 0.5 };
        let x = self.lo + (k as f64 + frac) * self.width;
        (x - self.mean) / self.sd
    }
}

pub(crate) enum Sampler {
    Gaussian,
    Uniform,
    Rademacher,
    Custom(Piecewise),
}

impl Sampler {
    #[inline]
    pub(crate) fn draw(&self, s: &mut Stream) -> f64 {
        match self {
            Sampler::Gaussian => s.gaussian(),
            Sampler::Uniform => 3f64.sqrt() * (2.0 * s.uniform() - 1.0),
            Sampler::Rademacher => {
                if s.next_u64() >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Sampler::Custom(p) => p.sample(s.uniform()),
        }
    }
}

/// `floor(N^alpha)`, snapping to the nearest integer when `N^alpha` is within
/// `1e-9` (relative) of it so that exact powers are not lost to rounding.
pub fn half_band_for(n_half: usize, alpha: f64) -> usize {
    let x = (n_half as f64).powf(alpha);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Full description of one ensemble draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMatrixParams {
    /// Half-size `N`; the matrix dimension is `2N+1`.
    pub n_half: usize,
    /// Band exponent; either the construction input or `ln L / ln N`.
    pub alpha: f64,
    /// Half band width `L`.
    pub half_band: usize,
    pub periodic: bool,
    pub distribution: EntryDistribution,
    pub seed: u64,
}

impl BandMatrixParams {
    /// `L = floor(N^alpha)`.
    pub fn from_exponent(n_half: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let p = BandMatrixParams {
            n_half,
            alpha,
            half_band: half_band_for(n_half, alpha),
            periodic: false,
            distribution: EntryDistribution::StandardGaussian,
            seed: 0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Direct `(N, L)` construction; `alpha` is recorded as `ln L / ln N`
    /// (0 when `L <= 1` or `N <= 1`).
    pub fn from_half_band(n_half: usize, half_band: usize) -> Result<Self> {
        let alpha = if half_band <= 1 || n_half <= 1 {
            0.0
        } else {
            (half_band as f64).ln() / (n_half as f64).ln()
        };
        let p = BandMatrixParams {
            n_half,
            alpha,
            half_band,
            periodic: false,
            distribution: EntryDistribution::StandardGaussian,
            seed: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn with_distribution(mut self, distribution: EntryDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn dimension(&self) -> usize {
        2 * self.n_half + 1
    }

    /// `W = 2L+1`.
    pub fn band_width(&self) -> usize {
        2 * self.half_band + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_width() > self.dimension() {
            return Err(Error::config(format!(
                "band width W = {} exceeds matrix dimension 2N+1 = {}",
                self.band_width(),
                self.dimension()
            )));
        }
        self.distribution.validate()
    }
}

/// Symmetric band matrix of arbitrary dimension in lower band layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    periodic: bool,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize, periodic: bool) -> Self {
        assert!(n >= 1, "empty matrix");
        assert!(2 * bw < n || (!periodic && bw < n), "band does not fit");
        SymBand {
            n,
            bw,
            periodic,
            data: vec![0.0; (bw + 1) * n],
        }
    }

    /// Diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = SymBand::zeros(diag.len(), 0, false);
        m.data.copy_from_slice(diag);
        m
    }

    /// Random band matrix with entries `draw / sqrt(2 bw + 1)` in the
    /// documented draw order.
    pub fn sample(n: usize, bw: usize, periodic: bool, distribution: &EntryDistribution, seed: u64) -> Self {
        let mut m = SymBand::zeros(n, bw, periodic);
        let scale = 1.0 / ((2 * bw + 1) as f64).sqrt();
        let sampler = distribution.sampler();
        let mut stream = Stream::new(seed);
        for i in 0..n {
            for d in (0..=bw).rev() {
                if d > i && !periodic {
                    continue;
                }
                m.data[d * n + i] = sampler.draw(&mut stream) * scale;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half band width of the stored pattern.
    #[inline]
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Raw diagonal-major storage.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn band_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        if self.periodic {
            d.min(self.n - d)
        } else {
            d
        }
    }

    /// Storage slot of `(i, j)`, if the pair lies in the band.
    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d <= self.bw {
            return Some(d * self.n + hi);
        }
        if self.periodic {
            let dw = self.n - d;
            if dw <= self.bw {
                // wrap entry A(lo, lo - dw + n) = A(lo, hi)
                return Some(dw * self.n + lo);
            }
        }
        None
    }

    /// Entry `A(i, j)` for 0-based indices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Set `A(i, j) = A(j, i) = v`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside the band"));
        self.data[s] = v;
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.data[..self.n]
    }

    /// Every stored entry once, as `(row, col, value)` with the storage row
    /// first (`col > row` only for periodic wrap entries).
    pub fn stored_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..=self.bw).flat_map(move |d| {
            (0..n).filter_map(move |i| {
                if i >= d {
                    Some((i, i - d, self.data[d * n + i]))
                } else if self.periodic {
                    Some((i, i + n - d, self.data[d * n + i]))
                } else {
                    None
                }
            })
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Gershgorin interval `[min_i (a_ii - r_i), max_i (a_ii + r_i)]`.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut radius = vec![0.0; self.n];
        for (i, j, v) in self.stored_entries() {
            if i != j {
                radius[i] += v.abs();
                radius[j] += v.abs();
            }
        }
        let diag = self.diagonal();
        let lo = (0..self.n)
            .map(|i| diag[i] - radius[i])
            .fold(f64::INFINITY, f64::min);
        let hi = (0..self.n)
            .map(|i| diag[i] + radius[i])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Row-major dense copy; intended for oracles at small dimension.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (i, j, v) in self.stored_entries() {
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
        a
    }

    /// Principal submatrix on the contiguous index range `start..end`
    /// (non-periodic; wrap entries are dropped).
    pub fn principal_submatrix(&self, start: usize, end: usize) -> SymBand {
        assert!(start < end && end <= self.n);
        let m = end - start;
        let bw = self.bw.min(m - 1);
        let mut sub = SymBand::zeros(m, bw, false);
        for d in 0..=bw {
            for i in d..m {
                sub.data[d * m + i] = self.get(start + i, start + i - d);
            }
        }
        sub
    }

    /// Nominal variance row sums: `(#in-band j) / (2 bw + 1)`.
    pub fn row_variance_profile(&self) -> Vec<f64> {
        let w = (2 * self.bw + 1) as f64;
        (0..self.n)
            .map(|i| {
                let count = if self.periodic {
                    2 * self.bw + 1
                } else {
                    i.min(self.bw) + (self.n - 1 - i).min(self.bw) + 1
                };
                count as f64 / w
            })
            .collect()
    }

    /// Permutation placing cyclic neighbours close together:
    /// `0, n-1, 1, n-2, 2, ...`. Returns `order[pos] = index`.
    pub fn fold_order(n: usize) -> Vec<usize> {
        let mut order = Vec::with_capacity(n);
        let (mut lo, mut hi) = (0usize, n - 1);
        while lo <= hi {
            order.push(lo);
            if hi != lo {
                order.push(hi);
            }
            lo += 1;
            if hi == 0 {
                break;
            }
            hi -= 1;
        }
        order.truncate(n);
        order
    }

    /// Non-periodic band matrix orthogonally similar (by a permutation) to
    /// `self`. Periodic matrices are folded with [`SymBand::fold_order`],
    /// which at most doubles the bandwidth.
    pub fn unfolded(&self) -> std::borrow::Cow<'_, SymBand> {
        if !self.periodic {
            return std::borrow::Cow::Borrowed(self);
        }
        let n = self.n;
        let order = Self::fold_order(n);
        let mut pos = vec![0usize; n];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        let bw = self
            .stored_entries()
            .map(|(i, j, _)| pos[i].abs_diff(pos[j]))
            .max()
            .unwrap_or(0);
        let mut out = SymBand::zeros(n, bw.min(n - 1), false);
        for (i, j, v) in self.stored_entries() {
            out.set(pos[i], pos[j], v);
        }
        std::borrow::Cow::Owned(out)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, j, v) in self.stored_entries() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }
}

/// One realization `H_L^N` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub params: BandMatrixParams,
    band: SymBand,
}

const MAGIC: &[u8; 4] = b"RBMX";
const FORMAT_VERSION: u32 = 1;

impl BandMatrix {
    /// Bit-reproducible draw from `params`.
    pub fn sample(params: &BandMatrixParams) -> Result<Self> {
        params.validate()?;
        let band = SymBand::sample(
            params.dimension(),
            params.half_band,
            params.periodic,
            &params.distribution,
            params.seed,
        );
        Ok(BandMatrix {
            params: params.clone(),
            band,
        })
    }

    /// Wrap explicit storage (used by tests and the block module).
    pub fn from_band(params: BandMatrixParams, band: SymBand) -> Result<Self> {
        params.validate()?;
        if band.dim() != params.dimension()
            || band.bandwidth() != params.half_band
            || band.is_periodic() != params.periodic
        {
            return Err(Error::config("band storage does not match parameters"));
        }
        Ok(BandMatrix { params, band })
    }

    pub fn band(&self) -> &SymBand {
        &self.band
    }

    pub fn n_half(&self) -> usize {
        self.params.n_half
    }

    pub fn dimension(&self) -> usize {
        self.band.dim()
    }

    /// Entry at logical indices `-N <= i, j <= N`.
    pub fn entry(&self, i: i64, j: i64) -> f64 {
        let n = self.params.n_half as i64;
        assert!(
            (-n..=n).contains(&i) && (-n..=n).contains(&j),
            "index out of range"
        );
        self.band.get((i + n) as usize, (j + n) as usize)
    }

    pub fn row_variance_profile(&self) -> Vec<f64> {
        self.band.row_variance_profile()
    }

    /// Little-endian encoding:
    /// `"RBMX"`, `u32` version, `u64 N`, `u64 L`, `u8` periodic, `u8`
    /// distribution tag, `u32` parameter count `k`, `k x f64` parameters,
    /// `f64 alpha`, `u64 seed`, then the `(L+1)(2N+1)` band values in storage
    /// order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let dist = p.distribution.parameters();
        let mut out = Vec::with_capacity(48 + 8 * (dist.len() + self.band.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.n_half as u64).to_le_bytes());
        out.extend_from_slice(&(p.half_band as u64).to_le_bytes());
        out.push(p.periodic as u8);
        out.push(p.distribution.tag());
        out.extend_from_slice(&(dist.len() as u32).to_le_bytes());
        for v in &dist {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.alpha.to_le_bytes());
        out.extend_from_slice(&p.seed.to_le_bytes());
        for v in &self.band.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported version {version}")));
        }
        let n_half = r.u64()? as usize;
        let half_band = r.u64()? as usize;
        let periodic = r.take(1)?[0] != 0;
        let tag = r.take(1)?[0];
        let k = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let dist_params = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let alpha = r.f64()?;
        let seed = r.u64()?;
        let params = BandMatrixParams {
            n_half,
            alpha,
            half_band,
            periodic,
            distribution: EntryDistribution::from_tag(tag, &dist_params)?,
            seed,
        };
        params.validate().map_err(|e| Error::Decode(e.to_string()))?;
        let n = params.dimension();
        let len = (half_band + 1) * n;
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Decode("trailing bytes".into()));
        }
        Ok(BandMatrix {
            params,
            band: SymBand {
                n,
                bw: half_band,
                periodic,
                data,
            },
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::Decode("truncated input".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// `sample_band_matrix` of the operation table.
pub fn sample_band_matrix(params: &BandMatrixParams) -> Result<BandMatrix> {
    BandMatrix::sample(params)
}

pub fn row_variance_profile(m: &BandMatrix) -> Vec<f64> {
    m.row_variance_profile()
}
