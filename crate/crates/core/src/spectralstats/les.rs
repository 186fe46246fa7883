use serde::{Deserialize, Serialize};

use crate::eigensolver::{BandCounter, Spectrum};
use crate::error::{Error, Result};

/// Slack allowed beyond `[-2, 2]` for physical windows.
pub const WINDOW_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Unfolding {
    /// Rescale by the matrix dimension `2N+1` (unit mean level density).
    #[default]
    Dimension,
    /// Rescale by the half-size `N`.
    HalfSize,
}

impl Unfolding {
    pub fn scale(self, n_half: usize) -> f64 {
        match self {
            Unfolding::Dimension => (2 * n_half + 1) as f64,
            Unfolding::HalfSize => n_half as f64,
        }
    }
}

/// Rescaled window `I = [lo, hi]` centred at `E0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleWindow {
    pub e0: f64,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub unfolding: Unfolding,
}

impl RescaleWindow {
    pub fn new(e0: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(e0 > -2.0 && e0 < 2.0) {
            return Err(Error::config(format!("E0 must lie in (-2, 2), got {e0}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(format!(
                "window needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(RescaleWindow {
            e0,
            lo,
            hi,
            unfolding: Unfolding::Dimension,
        })
    }

    pub fn with_unfolding(mut self, unfolding: Unfolding) -> Self {
        self.unfolding = unfolding;
        self
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// Physical window `(E0 + lo/scale, E0 + hi/scale]`.
    pub fn physical(&self, n_half: usize) -> Result<(f64, f64)> {
        let scale = self.unfolding.scale(n_half);
        if !(scale > 0.0) {
            return Err(Error::config("rescaling needs N >= 1"));
        }
        let a = self.e0 + self.lo / scale;
        let b = self.e0 + self.hi / scale;
        let lim = 2.0 + WINDOW_MARGIN;
        if a < -lim || b > lim {
            return Err(Error::config(format!(
                "physical window ({a}, {b}] leaves (-{lim}, {lim})"
            )));
        }
        Ok((a, b))
    }
}

/// One realization of the local counting variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesSample {
    pub window: RescaleWindow,
    pub n_half: usize,
    pub count: u64,
}

/// Count of rescaled eigenvalues in the window, from a full spectrum of
/// dimension `2N+1`.
pub fn les_count(spec: &Spectrum, w: &RescaleWindow) -> Result<LesSample> {
    let len = spec.len();
    if len.is_multiple_of(2) {
        return Err(Error::config(format!(
            "spectrum length {len} is not of the form 2N+1"
        )));
    }
    let n_half = (len - 1) / 2;
    let count = if w.is_empty() {
        0
    } else {
        let (a, b) = w.physical(n_half)?;
        spec.count_in(a, b) as u64
    };
    Ok(LesSample {
        window: *w,
        n_half,
        count,
    })
}

/// Same count via inertia on the band matrix.
pub fn les_count_band(counter: &mut BandCounter<'_>, w: &RescaleWindow) -> Result<LesSample> {
    let len = counter.dim();
    if len.is_multiple_of(2) {
        return Err(Error::config(format!(
            "matrix dimension {len} is not of the form 2N+1"
        )));
    }
    let n_half = (len - 1) / 2;
    let count = if w.is_empty() {
        0
    } else {
        let (a, b) = w.physical(n_half)?;
        counter.count_in(a, b)?.count as u64
    };
    Ok(LesSample {
        window: *w,
        n_half,
        count,
    })
}
