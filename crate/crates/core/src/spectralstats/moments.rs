use serde::{Deserialize, Serialize};

use crate::eigensolver::IntervalCount;
use crate::error::{Error, Result};
use crate::fit::mean_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn estimate(samples: &[IntervalCount], f: impl Fn(f64) -> f64, what: &str) -> Result<MomentEstimate> {
    if samples.is_empty() {
        return Err(Error::Insufficient(format!("{what} needs at least one sample")));
    }
    let v: Vec<f64> = samples.iter().map(|s| f(s.count as f64)).collect();
    let (value, stderr) = mean_stderr(&v);
    Ok(MomentEstimate {
        value,
        stderr,
        samples: v.len(),
    })
}

/// `E{ Tr chi_I(H) }` over iid realizations.
pub fn wegner_moment(samples: &[IntervalCount]) -> Result<MomentEstimate> {
    estimate(samples, |c| c, "wegner moment")
}

/// Second factorial moment `E{ Tr chi_I (Tr chi_I - 1) }`.
pub fn minami_moment(samples: &[IntervalCount]) -> Result<MomentEstimate> {
    estimate(samples, |c| c * (c - 1.0), "minami moment")
}
