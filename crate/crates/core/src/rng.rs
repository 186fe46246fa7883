//! Seeding and sampling primitives shared by every stochastic module.
//!
//! Bit-exact definitions (so that other implementations can reproduce the
//! same matrices):
//!
//! * `mix(z)` is the SplitMix64 finalizer:
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`
//!   (all arithmetic wrapping).
//! * A stream seeded with `s` is ChaCha8 keyed with the 32 bytes obtained by
//!   writing `mix(s + k*G)` for `k = 1..=4` in little-endian order, where
//!   `G = 0x9E3779B97F4A7C15`; nonce and counter start at zero.
//! * `uniform()` is `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `gaussian()` uses Box-Muller on pairs: `u1 = ((next_u64() >> 11) + 1) * 2^-53`
//!   (in `(0, 1]`), `u2 = uniform()`, `r = sqrt(-2 ln u1)`; the pair is
//!   `(r cos(2 pi u2), r sin(2 pi u2))`, returned cosine first.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of grid point `grid` under `master`.
///
/// `mix(mix(mix(m + G) + (g + 1) G) + (t + 1) G)`. For fixed `(master, grid)`
/// the map `trial -> seed` is a bijection of `u64`.
pub fn derive_trial_seed(master: u64, grid: u64, trial: u64) -> u64 {
    let a = mix(master.wrapping_add(GOLDEN_GAMMA));
    let b = mix(a.wrapping_add(grid.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
    mix(b.wrapping_add(trial.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Seed used when a trial is retried after a numerical failure.
pub fn retry_seed(seed: u64) -> u64 {
    mix(seed ^ 0xD1B5_4A32_D192_ED03)
}

/// Counter-based random stream with the documented samplers.
pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (k, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix(seed.wrapping_add((k as u64 + 1).wrapping_mul(GOLDEN_GAMMA)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Stream {
            rng: ChaCha8Rng::from_seed(key),
            spare: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    #[inline]
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Poisson variate by inversion; intended for small means (tests, synthetic data).
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u >= cdf && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
        k
    }
}
