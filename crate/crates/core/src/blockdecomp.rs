//! Block decomposition of the index set and comparison of the global window
//! count with the superposition of block counts.
//!
//! Indices are 0-based positions `0..2N+1`; position `i` is the site `i - N`.
//! Blocks have `2 floor(N^beta) + 1` sites, except possibly a shorter last
//! block. Within a block the boundary is the set of sites at distance at most
//! `N^alpha` from either endpoint, and the interior is the set of sites at
//! distance more than `N^{mu alpha} delta ln N` from the boundary; the rest is
//! the middle shell.
//!
//! Two ways of building block matrices are provided. In the independent mode
//! each block gets fresh entries; in the coupled mode the blocks are principal
//! submatrices of one realization, so the difference between the global and
//! superposed counts comes only from the dropped off-block couplings.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::BandCounter;
use crate::ensemble::{BandMatrix, BandMatrixParams, SymBand};
use crate::error::{Error, Result};
use crate::fit::mean_stderr;
use crate::localization::ResolventSolver;
use crate::rng::derive_trial_seed;
use crate::spectralstats::RescaleWindow;

pub const DEFAULT_MU: f64 = 2.0;
pub const DEFAULT_DELTA: f64 = 2.0;

/// Minimum trial count for [`coupling_compare`].
pub const MIN_COMPARE_TRIALS: usize = 100;

/// Exponents and options of a block decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub n_half: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Also require `alpha + beta < 1`.
    #[serde(default)]
    pub weak: bool,
    /// Optional `(kappa, sigma)` against which `delta` is checked.
    #[serde(default)]
    pub kappa_sigma: Option<(f64, f64)>,
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl BlockConfig {
    pub fn new(n_half: usize, alpha: f64, beta: f64) -> Self {
        BlockConfig {
            n_half,
            alpha,
            beta,
            mu: DEFAULT_MU,
            delta: DEFAULT_DELTA,
            weak: false,
            kappa_sigma: None,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_weak(mut self, weak: bool) -> Self {
        self.weak = weak;
        self
    }

    pub fn with_kappa_sigma(mut self, kappa: f64, sigma: f64) -> Self {
        self.kappa_sigma = Some((kappa, sigma));
        self
    }

    /// Exponent inequalities, each violation named in the error.
    pub fn check_exponents(&self) -> Result<()> {
        let (a, b) = (self.alpha, self.beta);
        if !(0.0..0.5).contains(&a) {
            return Err(Error::config(format!("0 <= alpha < 1/2 violated (alpha = {a})")));
        }
        if !(a < b) {
            return Err(Error::config(format!(
                "alpha < beta violated (alpha = {a}, beta = {b})"
            )));
        }
        if !(b < 1.0) {
            return Err(Error::config(format!("beta < 1 violated (beta = {b})")));
        }
        if self.weak && !(a + b < 1.0) {
            return Err(Error::config(format!(
                "alpha+beta must be < 1 in weak mode (alpha + beta = {})",
                a + b
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::config(format!("mu > 0 violated (mu = {})", self.mu)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config(format!(
                "delta > 0 violated (delta = {})",
                self.delta
            )));
        }
        if let Some((kappa, sigma)) = self.kappa_sigma {
            if !(kappa > 0.0) {
                return Err(Error::config(format!("kappa > 0 violated (kappa = {kappa})")));
            }
            let bound = (a * (0.125 + self.mu) + sigma / 2.0) / kappa;
            if !(self.delta > bound) {
                return Err(Error::config(format!(
                    "delta > (alpha (1/8 + mu) + sigma/2) / kappa violated (delta = {}, bound = {bound})",
                    self.delta
                )));
            }
        }
        Ok(())
    }
}

/// One block: a contiguous range with its boundary and interior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    /// Sites `start..start + reach` and `end - reach..end` form the boundary.
    pub boundary_reach: usize,
    pub interior: Range<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn boundary(&self) -> Vec<usize> {
        let r = self.boundary_reach.min(self.len());
        let left = self.start..self.start + r;
        let right = (self.end - r).max(self.start + r)..self.end;
        left.chain(right).collect()
    }

    pub fn interior(&self) -> Vec<usize> {
        self.interior.clone().collect()
    }

    /// Sites neither on the boundary nor in the interior.
    pub fn middle_shell(&self) -> Vec<usize> {
        let r = self.boundary_reach.min(self.len());
        (self.start..self.end)
            .filter(|&i| i >= self.start + r && i + r < self.end && !self.interior.contains(&i))
            .collect()
    }

    /// Sites outside the interior.
    pub fn non_interior(&self) -> Vec<usize> {
        (self.start..self.end)
            .filter(|i| !self.interior.contains(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub config: BlockConfig,
    /// `floor(N^beta)`; full blocks have `2 block_half + 1` sites.
    pub block_half: usize,
    pub blocks: Vec<Block>,
    /// `alpha mu < beta`; recorded, not enforced.
    pub scale_order_ok: bool,
    /// Distance to the boundary beyond which a site is interior.
    pub interior_gap: f64,
}

impl BlockScheme {
    pub fn n_half(&self) -> usize {
        self.config.n_half
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Size shared by all full blocks.
    pub fn full_block_len(&self) -> usize {
        2 * self.block_half + 1
    }

    /// Whether the last block is shorter than the others.
    pub fn has_short_block(&self) -> bool {
        self.blocks
            .last()
            .is_some_and(|b| b.len() < self.full_block_len())
    }

    /// Block index of every site.
    pub fn block_of(&self, site: usize) -> Option<usize> {
        let n = 2 * self.n_half() + 1;
        (site < n).then(|| site / self.full_block_len())
    }
}

fn partition(n: usize, block_len: usize, reach: usize, gap: f64) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + block_len).min(n);
        // sites with distance to the boundary > gap
        let lo = start + reach;
        let hi = end.saturating_sub(reach + 1);
        let first = lo as f64 + gap;
        let last = hi as f64 - gap;
        let i0 = first.floor() as i64 + 1;
        let i1 = last.ceil() as i64 - 1;
        let interior = if end > start + 2 * reach + 1 && i0 <= i1 && i0 >= 0 {
            i0 as usize..i1 as usize + 1
        } else {
            start..start
        };
        blocks.push(Block {
            start,
            end,
            boundary_reach: reach + 1,
            interior,
        });
        start = end;
    }
    blocks
}

fn snapped_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Concrete partition of `0..2N+1` for the given exponents.
pub fn make_block_scheme(config: &BlockConfig) -> Result<BlockScheme> {
    config.check_exponents()?;
    let n_half = config.n_half;
    if n_half == 0 {
        return Err(Error::config("block decomposition needs N >= 1"));
    }
    let nf = n_half as f64;
    let block_half = snapped_floor(nf.powf(config.beta)).max(1);
    // boundary: distance to an endpoint at most N^alpha
    let reach = snapped_floor(nf.powf(config.alpha));
    let gap = nf.powf(config.mu * config.alpha) * config.delta * nf.ln();
    let n = 2 * n_half + 1;
    let blocks = partition(n, 2 * block_half + 1, reach, gap);
    let full = 2 * block_half + 1;
    for (p, b) in blocks.iter().enumerate() {
        let checked = b.len() == full || blocks.len() == 1;
        if checked && b.interior.is_empty() {
            return Err(Error::config(format!(
                "block {p} has an empty interior (gap {gap:.2} with {full} sites per block); increase N or decrease delta"
            )));
        }
    }
    Ok(BlockScheme {
        config: config.clone(),
        block_half,
        blocks,
        scale_order_ok: config.alpha * config.mu < config.beta,
        interior_gap: gap,
    })
}

/// Scheme with one block covering all sites (no interior requirement).
pub fn single_block_scheme(n_half: usize) -> BlockScheme {
    let n = 2 * n_half + 1;
    BlockScheme {
        config: BlockConfig::new(n_half, 0.0, 1.0),
        block_half: n_half,
        blocks: vec![Block {
            start: 0,
            end: n,
            boundary_reach: 0,
            interior: 0..n,
        }],
        scale_order_ok: true,
        interior_gap: 0.0,
    }
}

/// Per-block counts and their sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub per_block: Vec<u64>,
    pub zeta: u64,
}

impl BlockCounts {
    fn from_counts(per_block: Vec<u64>) -> Self {
        let zeta = per_block.iter().sum();
        BlockCounts { per_block, zeta }
    }
}

fn check_inputs(params: &BandMatrixParams, scheme: &BlockScheme) -> Result<()> {
    params.validate()?;
    if params.n_half != scheme.n_half() {
        return Err(Error::config(format!(
            "matrix N = {} differs from block scheme N = {}",
            params.n_half,
            scheme.n_half()
        )));
    }
    let w = params.band_width();
    if let Some((p, b)) = scheme.blocks.iter().enumerate().find(|(_, b)| b.len() < w) {
        return Err(Error::config(format!(
            "block {p} has {} sites, shorter than the band width {w}",
            b.len()
        )));
    }
    Ok(())
}

fn count_window(m: &SymBand, a: f64, b: f64) -> Result<u64> {
    Ok(BandCounter::new(m).count_in(a, b)?.count as u64)
}

/// Independent block matrices with fresh entries: block `p` uses the seed
/// `derive_trial_seed(params.seed, 1, p)`.
pub fn sample_block_counts(
    params: &BandMatrixParams,
    scheme: &BlockScheme,
    w: &RescaleWindow,
) -> Result<BlockCounts> {
    check_inputs(params, scheme)?;
    if w.is_empty() {
        return Ok(BlockCounts::from_counts(vec![0; scheme.block_count()]));
    }
    let (a, b) = w.physical(params.n_half)?;
    let counts = scheme
        .blocks
        .iter()
        .enumerate()
        .map(|(p, blk)| {
            let len = blk.len();
            let seed = derive_trial_seed(params.seed, 1, p as u64);
            let bw = params.half_band.min(len - 1);
            let m = SymBand::sample(len, bw, false, &params.distribution, seed);
            count_window(&m, a, b)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(BlockCounts::from_counts(counts))
}

/// Global count and block counts of one realization, blocks taken as
/// principal submatrices.
pub fn coupled_counts(m: &BandMatrix, scheme: &BlockScheme, w: &RescaleWindow) -> Result<(u64, BlockCounts)> {
    check_inputs(&m.params, scheme)?;
    if w.is_empty() {
        return Ok((0, BlockCounts::from_counts(vec![0; scheme.block_count()])));
    }
    let (a, b) = w.physical(m.n_half())?;
    let xi = count_window(m.band(), a, b)?;
    let counts = scheme
        .blocks
        .iter()
        .map(|blk| count_window(&m.band().principal_submatrix(blk.start, blk.end), a, b))
        .collect::<Result<Vec<u64>>>()?;
    Ok((xi, BlockCounts::from_counts(counts)))
}

/// One trial of the coupled comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledTrial {
    pub trial: usize,
    pub seed: u64,
    pub xi: u64,
    pub zeta: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub n_half: usize,
    pub alpha: f64,
    pub beta: f64,
    pub trials: usize,
    pub mean_xi: f64,
    pub mean_zeta: f64,
    pub mean_abs_diff: f64,
    pub mean_abs_diff_stderr: f64,
    pub mean_diff: f64,
    pub mean_diff_stderr: f64,
    pub match_rate: f64,
    pub match_rate_stderr: f64,
}

impl CouplingReport {
    pub fn from_trials(scheme: &BlockScheme, alpha: f64, trials: &[CoupledTrial]) -> Self {
        let col = |f: &dyn Fn(&CoupledTrial) -> f64| -> (f64, f64) {
            mean_stderr(&trials.iter().map(f).collect::<Vec<f64>>())
        };
        let (mean_xi, _) = col(&|t| t.xi as f64);
        let (mean_zeta, _) = col(&|t| t.zeta as f64);
        let (mean_abs_diff, mean_abs_diff_stderr) = col(&|t| t.xi.abs_diff(t.zeta) as f64);
        let (mean_diff, mean_diff_stderr) = col(&|t| t.xi as f64 - t.zeta as f64);
        let (match_rate, match_rate_stderr) = col(&|t| if t.xi == t.zeta { 1.0 } else { 0.0 });
        CouplingReport {
            n_half: scheme.n_half(),
            alpha,
            beta: scheme.config.beta,
            trials: trials.len(),
            mean_xi,
            mean_zeta,
            mean_abs_diff,
            mean_abs_diff_stderr,
            mean_diff,
            mean_diff_stderr,
            match_rate,
            match_rate_stderr,
        }
    }
}

/// Coupled trials; trial `t` uses the matrix seed
/// `derive_trial_seed(params.seed, 0, t)`.
pub fn coupled_trials(
    params: &BandMatrixParams,
    scheme: &BlockScheme,
    w: &RescaleWindow,
    trials: usize,
) -> Result<Vec<CoupledTrial>> {
    check_inputs(params, scheme)?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_trial_seed(params.seed, 0, t as u64);
            let m = BandMatrix::sample(&params.clone().with_seed(seed))?;
            let (xi, bc) = coupled_counts(&m, scheme, w)?;
            Ok(CoupledTrial {
                trial: t,
                seed,
                xi,
                zeta: bc.zeta,
            })
        })
        .collect()
}

/// `E|xi - zeta|`, `E(xi - zeta)` and `P(xi = zeta)` over coupled trials.
pub fn coupling_compare(
    params: &BandMatrixParams,
    scheme: &BlockScheme,
    w: &RescaleWindow,
    trials: usize,
) -> Result<CouplingReport> {
    if trials < MIN_COMPARE_TRIALS {
        return Err(Error::config(format!(
            "comparison needs at least {MIN_COMPARE_TRIALS} trials, got {trials}"
        )));
    }
    let rows = coupled_trials(params, scheme, w, trials)?;
    Ok(CouplingReport::from_trials(scheme, params.alpha, &rows))
}

/// Resolvent comparison diagnostics of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventErrorTerms {
    /// Non-interior contribution `(2N+1)^{-1} sum Im G_N(j,j) + Im G_{N,p}(j,j)`.
    pub a_n: f64,
    /// Interior contribution bounded through the dropped couplings.
    pub b_n: f64,
    /// `(2N+1)^{-1} |Im Tr R_N - sum_p Im Tr R_{N,p}|`.
    pub trace_gap: f64,
}

/// `A_N(z)` and `B_N(z)` for the coupled blocks of one realization.
///
/// `B_N` sums, over interior sites `j` of each block `p`, the terms
/// `|G_{N,p}(j,k)| |H(k,l)| |G_N(l,j)|` over the couplings `(k, l)` cut by the
/// block boundary, which bounds `|G_N(j,j) - G_{N,p}(j,j)|` through the
/// resolvent identity. Hence `trace_gap <= a_n + b_n`.
pub fn resolvent_error_terms(
    m: &BandMatrix,
    scheme: &BlockScheme,
    z: Complex64,
) -> Result<ResolventErrorTerms> {
    check_inputs(&m.params, scheme)?;
    if !(z.im > 0.0) {
        return Err(Error::config("resolvent diagnostics need Im z > 0"));
    }
    let full = m.band();
    let n = full.dim();
    let bw = full.bandwidth();
    let global = ResolventSolver::new(full, z)?;
    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    let mut trace_full = 0.0;
    let mut trace_blocks = 0.0;
    for blk in &scheme.blocks {
        let sub = full.principal_submatrix(blk.start, blk.end);
        let local = ResolventSolver::new(&sub, z)?;
        // couplings cut by the block: k inside, l outside
        let mut cuts = Vec::new();
        for k in blk.range() {
            for d in 1..=bw {
                let right = (k + d < n).then_some(k + d);
                let left = k.checked_sub(d);
                let (right, left) = if full.is_periodic() {
                    (Some((k + d) % n), Some((k + n - d) % n))
                } else {
                    (right, left)
                };
                for l in [left, right].into_iter().flatten() {
                    if !blk.range().contains(&l) {
                        let h = full.get(k, l);
                        if h != 0.0 {
                            cuts.push((k, l, h));
                        }
                    }
                }
            }
        }
        for j in blk.range() {
            let gj = global.column(j)?;
            let lj = local.column(j - blk.start)?;
            let g_full = gj[j].im;
            let g_block = lj[j - blk.start].im;
            trace_full += g_full;
            trace_blocks += g_block;
            if blk.interior.contains(&j) {
                b_sum += cuts
                    .iter()
                    .map(|&(k, l, h)| lj[k - blk.start].norm() * h.abs() * gj[l].norm())
                    .sum::<f64>();
            } else {
                a_sum += g_full + g_block;
            }
        }
    }
    let nf = n as f64;
    Ok(ResolventErrorTerms {
        a_n: a_sum / nf,
        b_n: b_sum / nf,
        trace_gap: (trace_full - trace_blocks).abs() / nf,
    })
}
