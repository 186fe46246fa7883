//! Statistics of random band matrix spectra.
//!
//! Local windows are expressed in rescaled units `s`: the rescaled window `I`
//! around `E0` corresponds to the physical window `E0 + I / scale`, where the
//! scale is set by [`Unfolding`]. The default unfolds by the matrix dimension
//! `2N+1`, so the expected count in a window of rescaled length `|I|` is close
//! to `n_sc(E0) |I|`. [`Unfolding::HalfSize`] rescales by `N` instead, which
//! doubles all intensities.

mod charexp;
mod dos;
mod gapratio;
mod intensity;
mod les;
mod moments;
mod poissonfit;
mod semicircle;

pub use charexp::{
    char_exponent, default_t_grid, poisson_exponent_check, CharExponentEstimate, PoissonExponentCheck,
};
pub use dos::{empirical_dos, Binning, EmpiricalDos};
pub use gapratio::{gap_ratio_of_levels, gap_ratio_statistic, GOE_GAP_RATIO, POISSON_GAP_RATIO};
pub use intensity::{
    intensity_bn, intensity_integrated, IntegratedIntensity, IntensityEstimate, MIN_QUADRATURE_NODES,
};
pub use les::{les_count, les_count_band, LesSample, RescaleWindow, Unfolding, WINDOW_MARGIN};
pub use moments::{minami_moment, wegner_moment, MomentEstimate};
pub use poissonfit::{poisson_fit_test, poisson_pmf, PoissonFitReport, PoissonRow, MIN_FIT_SAMPLES};
pub use semicircle::{semicircle_cdf, semicircle_density, semicircle_measure, SemicircleLaw};
