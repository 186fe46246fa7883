//! Numerical laboratory for one-dimensional random band matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`ensemble`] draws real symmetric band matrices with iid entries scaled by
//!   `1/sqrt(2L+1)`, optionally with periodic banding.
//! * [`eigensolver`] reduces a band matrix to tridiagonal form, computes full
//!   spectra and counts eigenvalues in intervals (Sturm sequences on the
//!   tridiagonal, inertia of a banded `LDL^T` on the band matrix itself).
//! * [`spectralstats`] implements the local eigenvalue statistics, the
//!   semicircle law, Wegner/Minami moments, intensities, characteristic
//!   exponents, the gap ratio and Poisson goodness of fit.
//! * [`blockdecomp`] splits the index set into blocks and compares the full
//!   counting variable with the superposition of block counts.
//! * [`localization`] computes resolvent columns and fractional-moment decay.
//! * [`montecarlo`] runs seeded, worker-count invariant experiments and writes
//!   reproducibility manifests; [`cli`] is the command-line front end.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blockdecomp;
pub mod cli;
pub mod eigensolver;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod localization;
pub mod montecarlo;
pub mod rng;
pub mod spectralstats;

pub use error::{Error, Result};
