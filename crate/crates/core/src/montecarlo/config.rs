use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blockdecomp::{make_block_scheme, BlockConfig, DEFAULT_DELTA, DEFAULT_MU};
use crate::ensemble::{BandMatrixParams, EntryDistribution};
use crate::error::{Error, Result};
use crate::localization::{validate_decay, DecayOptions, MomentEstimator};
use crate::spectralstats::{Binning, RescaleWindow, Unfolding, MIN_QUADRATURE_NODES};

/// Environment variable overriding the worker count.
pub const ENV_WORKERS: &str = "RBMLAB_WORKERS";
/// Environment variable overriding the output directory.
pub const ENV_OUTPUT: &str = "RBMLAB_OUTPUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Dos,
    LesPoisson,
    Wegner,
    Minami,
    Intensity,
    CharExponent,
    GapRatio,
    BlockCompare,
    Localization,
    PhaseDiagram,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Dos,
        ExperimentKind::LesPoisson,
        ExperimentKind::Wegner,
        ExperimentKind::Minami,
        ExperimentKind::Intensity,
        ExperimentKind::CharExponent,
        ExperimentKind::GapRatio,
        ExperimentKind::BlockCompare,
        ExperimentKind::Localization,
        ExperimentKind::PhaseDiagram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Dos => "dos",
            ExperimentKind::LesPoisson => "les-poisson",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::Minami => "minami",
            ExperimentKind::Intensity => "intensity",
            ExperimentKind::CharExponent => "char-exponent",
            ExperimentKind::GapRatio => "gap-ratio",
            ExperimentKind::BlockCompare => "block-compare",
            ExperimentKind::Localization => "localization",
            ExperimentKind::PhaseDiagram => "phase-diagram",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::config(format!("unknown experiment kind '{name}'")))
    }

    fn uses_windows(self) -> bool {
        matches!(
            self,
            ExperimentKind::LesPoisson
                | ExperimentKind::Wegner
                | ExperimentKind::Minami
                | ExperimentKind::Intensity
                | ExperimentKind::CharExponent
                | ExperimentKind::BlockCompare
        )
    }

    fn uses_energy(self) -> bool {
        self.uses_windows()
            || matches!(
                self,
                ExperimentKind::GapRatio | ExperimentKind::PhaseDiagram | ExperimentKind::Localization
            )
    }

    fn default_trials(self) -> usize {
        match self {
            ExperimentKind::Dos => 20,
            ExperimentKind::LesPoisson | ExperimentKind::CharExponent => 10_000,
            ExperimentKind::Wegner | ExperimentKind::Minami | ExperimentKind::Intensity => 1000,
            ExperimentKind::GapRatio | ExperimentKind::PhaseDiagram => 200,
            ExperimentKind::BlockCompare => 500,
            ExperimentKind::Localization => 1000,
        }
    }

    fn default_alpha(self) -> Vec<f64> {
        match self {
            ExperimentKind::Dos => vec![0.5],
            ExperimentKind::LesPoisson => vec![0.25],
            ExperimentKind::BlockCompare | ExperimentKind::Localization => vec![0.2],
            ExperimentKind::PhaseDiagram => (1..=9).map(|k| k as f64 / 10.0).collect(),
            _ => vec![0.3],
        }
    }

    fn default_n(self) -> Vec<usize> {
        match self {
            ExperimentKind::LesPoisson | ExperimentKind::CharExponent | ExperimentKind::PhaseDiagram => {
                vec![1000]
            }
            ExperimentKind::Wegner | ExperimentKind::Minami | ExperimentKind::Intensity => vec![500],
            _ => vec![250, 500, 1000, 2000],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How block matrices are built in block comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BlockMode {
    /// Principal submatrices of the same realization.
    #[default]
    Coupled,
    /// Fresh entries for every block.
    Independent,
}

impl BlockMode {
    pub fn name(self) -> &'static str {
        match self {
            BlockMode::Coupled => "coupled",
            BlockMode::Independent => "independent",
        }
    }
}

/// Interior gap factor used by block-comparison presets; smaller than the
/// scheme default so desk-scale sizes keep nonempty interiors.
pub const BLOCK_PRESET_DELTA: f64 = 0.5;

/// Experiment description; every list is a grid axis.
///
/// JSON keys match the field names, with `N`, `E0`, `I` and `J` capitalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(rename = "N", default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<bool>,
    #[serde(rename = "E0", default, skip_serializing_if = "Vec::is_empty")]
    pub e0: Vec<f64>,
    /// Rescaled windows `[lo, hi]`.
    #[serde(rename = "I", default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<[f64; 2]>,
    /// Window lengths turned into centred windows `[-w/2, w/2]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<f64>,
    /// Energy range for integrated intensities.
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub energy_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    /// Imaginary parts of the spectral parameter; empty means `1/N`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<BlockMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unfolding: Option<Unfolding>,
    /// Poisson rate for fit tests; `None` uses the measured mean count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<Binning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<MomentEstimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<EntryDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// One grid point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    #[serde(rename = "N")]
    pub n_half: usize,
    pub alpha: f64,
    pub half_band: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "E0", skip_serializing_if = "Option::is_none")]
    pub e0: Option<f64>,
    #[serde(rename = "I", skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            n: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            mu: None,
            delta: None,
            weak: None,
            e0: Vec::new(),
            windows: Vec::new(),
            widths: Vec::new(),
            energy_range: None,
            nodes: None,
            s: Vec::new(),
            epsilon: Vec::new(),
            t_grid: None,
            distances: None,
            halfwidth: None,
            mode: None,
            unfolding: None,
            lambda: None,
            binning: None,
            estimator: None,
            distribution: None,
            periodic: None,
            trials: None,
            seed: None,
            workers: None,
            output: None,
        }
    }

    /// Parse a config, or the config echoed inside a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("seed_rule").is_some() => c.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply `RBMLAB_WORKERS` and `RBMLAB_OUTPUT` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(ENV_WORKERS) {
            let w: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{ENV_WORKERS} must be a positive integer, got '{v}'")))?;
            self.workers = Some(w);
        }
        if let Ok(v) = std::env::var(ENV_OUTPUT) {
            if !v.is_empty() {
                self.output = Some(PathBuf::from(v));
            }
        }
        Ok(())
    }

    /// Copy with every kind-specific default filled in; seed, workers and
    /// output are left as given.
    pub fn resolved(&self) -> Self {
        let k = self.kind;
        let mut c = self.clone();
        if c.n.is_empty() {
            c.n = k.default_n();
        }
        if c.alpha.is_empty() {
            c.alpha = k.default_alpha();
        }
        if k == ExperimentKind::BlockCompare {
            if c.beta.is_empty() {
                c.beta = vec![0.7];
            }
            c.mu.get_or_insert(DEFAULT_MU);
            c.delta.get_or_insert(BLOCK_PRESET_DELTA);
            c.weak.get_or_insert(false);
            c.mode.get_or_insert(BlockMode::Coupled);
        }
        if k.uses_energy() && c.e0.is_empty() {
            c.e0 = vec![0.0];
        }
        if k.uses_windows() {
            let extra: Vec<[f64; 2]> = c.widths.iter().map(|w| [-w / 2.0, w / 2.0]).collect();
            c.windows.extend(extra);
            c.widths.clear();
            if c.windows.is_empty() {
                c.windows = vec![[0.0, 1.0]];
            }
            c.unfolding.get_or_insert(Unfolding::Dimension);
        }
        if k == ExperimentKind::Intensity && c.energy_range.is_some() {
            c.nodes.get_or_insert(32);
        }
        if k == ExperimentKind::Localization {
            if c.s.is_empty() {
                c.s = vec![0.5];
            }
            c.estimator.get_or_insert(MomentEstimator::Mean);
        }
        if matches!(k, ExperimentKind::GapRatio | ExperimentKind::PhaseDiagram) {
            c.halfwidth.get_or_insert(0.5);
        }
        if k == ExperimentKind::Dos {
            c.binning.get_or_insert(Binning::FreedmanDiaconis);
        }
        if k == ExperimentKind::CharExponent && c.t_grid.is_none() {
            c.t_grid = Some(crate::spectralstats::default_t_grid());
        }
        c.distribution.get_or_insert(EntryDistribution::StandardGaussian);
        c.periodic.get_or_insert(false);
        c.trials.get_or_insert(k.default_trials());
        c
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(self.kind.default_trials())
    }

    /// Matrix parameters of a grid point (seed 0).
    pub fn matrix_params(&self, p: &GridPoint) -> Result<BandMatrixParams> {
        let params = BandMatrixParams::from_exponent(p.n_half, p.alpha)?
            .with_periodic(self.periodic.unwrap_or(false))
            .with_distribution(self.distribution.clone().unwrap_or_default());
        params.validate()?;
        Ok(params)
    }

    pub fn rescale_window(&self, p: &GridPoint) -> Result<RescaleWindow> {
        let e0 = p.e0.ok_or_else(|| Error::config("grid point without E0"))?;
        let [lo, hi] = p.window.ok_or_else(|| Error::config("grid point without I"))?;
        Ok(RescaleWindow::new(e0, lo, hi)?.with_unfolding(self.unfolding.unwrap_or_default()))
    }

    pub fn block_config(&self, p: &GridPoint) -> Result<BlockConfig> {
        let beta = p.beta.ok_or_else(|| Error::config("grid point without beta"))?;
        Ok(BlockConfig::new(p.n_half, p.alpha, beta)
            .with_mu(self.mu.unwrap_or(DEFAULT_MU))
            .with_delta(self.delta.unwrap_or(DEFAULT_DELTA))
            .with_weak(self.weak.unwrap_or(false)))
    }

    /// Distance grid for localization points.
    pub fn distances_for(&self, p: &GridPoint) -> Vec<usize> {
        if let Some(d) = &self.distances {
            return d.clone();
        }
        let w = 2 * p.half_band + 1;
        let dmax = (40 * w).min(p.n_half.saturating_sub(1)).max(1);
        let step = (dmax / 60).max(1);
        (0..=dmax).step_by(step).collect()
    }

    pub fn decay_options(&self, p: &GridPoint) -> DecayOptions {
        DecayOptions {
            energy: p.e0.unwrap_or(0.0),
            epsilon: p.epsilon,
            s: p.s.unwrap_or(0.5),
            row: None,
            distances: self.distances_for(p),
            trials: self.trials(),
            estimator: self.estimator.unwrap_or_default(),
        }
    }

    /// Check a resolved config and enumerate its grid.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let k = self.kind;
        let trials = self.trials();
        if trials == 0 {
            return Err(Error::config("trials >= 1 violated"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers >= 1 violated"));
        }
        if self.n.is_empty() || self.alpha.is_empty() {
            return Err(Error::config("grid needs at least one N and one alpha"));
        }
        if let Some(d) = &self.distribution {
            d.validate()?;
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::config(format!("lambda > 0 violated (lambda = {l})")));
            }
        }
        if k == ExperimentKind::CharExponent && trials < 100 {
            return Err(Error::config("characteristic exponent needs trials >= 100"));
        }
        if k == ExperimentKind::BlockCompare && trials < crate::blockdecomp::MIN_COMPARE_TRIALS {
            return Err(Error::config(format!(
                "block comparison needs trials >= {}",
                crate::blockdecomp::MIN_COMPARE_TRIALS
            )));
        }
        if let Some(h) = self.halfwidth {
            if !(h > 0.0) {
                return Err(Error::config(format!("halfwidth > 0 violated (halfwidth = {h})")));
            }
        }
        if k == ExperimentKind::Intensity {
            if let Some([a, b]) = self.energy_range {
                if !(a >= -2.0 && b <= 2.0 && a < b) {
                    return Err(Error::config(format!(
                        "J must satisfy -2 <= a < b <= 2, got [{a}, {b}]"
                    )));
                }
                let nodes = self.nodes.unwrap_or(0);
                if nodes < MIN_QUADRATURE_NODES {
                    return Err(Error::config(format!(
                        "energy grid too coarse: {nodes} nodes, need at least {MIN_QUADRATURE_NODES}"
                    )));
                }
            }
        }
        if let Some(t) = &self.t_grid {
            if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("t grid must be nonempty and finite"));
            }
        }

        let betas: Vec<Option<f64>> = if self.beta.is_empty() {
            vec![None]
        } else {
            self.beta.iter().copied().map(Some).collect()
        };
        let energies: Vec<Option<f64>> = if k.uses_energy() {
            self.e0.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let windows: Vec<Option<[f64; 2]>> = if k.uses_windows() {
            self.windows.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let powers: Vec<Option<f64>> = if k == ExperimentKind::Localization {
            self.s.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let epsilons: Vec<Option<f64>> = if k == ExperimentKind::Localization && !self.epsilon.is_empty() {
            self.epsilon.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let intensity_integrated = k == ExperimentKind::Intensity && self.energy_range.is_some();

        let mut points = Vec::new();
        for &n_half in &self.n {
            for &alpha in &self.alpha {
                for &beta in &betas {
                    for &e0 in if intensity_integrated {
                        &[None][..]
                    } else {
                        &energies[..]
                    } {
                        for &window in &windows {
                            for &s in &powers {
                                for &epsilon in &epsilons {
                                    let params = BandMatrixParams::from_exponent(n_half, alpha)?;
                                    points.push(GridPoint {
                                        index: points.len(),
                                        n_half,
                                        alpha,
                                        half_band: params.half_band,
                                        beta,
                                        e0,
                                        window,
                                        s,
                                        epsilon,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        for p in &points {
            self.check_point(p)?;
        }
        Ok(points)
    }

    fn check_point(&self, p: &GridPoint) -> Result<()> {
        let k = self.kind;
        let params = self.matrix_params(p)?;
        if p.e0.is_some() && p.window.is_some() {
            self.rescale_window(p)?.physical(p.n_half)?;
        } else if let Some(e0) = p.e0 {
            if !(e0 > -2.0 && e0 < 2.0) && k != ExperimentKind::Localization {
                return Err(Error::config(format!("E0 must lie in (-2, 2), got {e0}")));
            }
        }
        if let Some(beta) = p.beta {
            match k {
                ExperimentKind::BlockCompare => {
                    let scheme = make_block_scheme(&self.block_config(p)?)?;
                    let w = params.band_width();
                    if let Some(b) = scheme.blocks.iter().find(|b| b.len() < w) {
                        return Err(Error::config(format!(
                            "block of {} sites is shorter than the band width {w}",
                            b.len()
                        )));
                    }
                }
                _ => {
                    if !(p.alpha < beta) {
                        return Err(Error::config(format!(
                            "alpha < beta violated (alpha = {}, beta = {beta})",
                            p.alpha
                        )));
                    }
                    if !(beta < 1.0) {
                        return Err(Error::config(format!("beta < 1 violated (beta = {beta})")));
                    }
                    if self.weak == Some(true) && !(p.alpha + beta < 1.0) {
                        return Err(Error::config(format!(
                            "alpha+beta must be < 1 in weak mode (alpha + beta = {})",
                            p.alpha + beta
                        )));
                    }
                }
            }
        } else if k == ExperimentKind::BlockCompare {
            return Err(Error::config("block comparison needs beta"));
        }
        if k == ExperimentKind::Localization {
            let mut opts = self.decay_options(p);
            opts.trials = self.trials();
            validate_decay(&params, &opts)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"kind":"dos","bogus":1}"#).is_err());
    }

    #[test]
    fn capitalised_keys() {
        let c = ExperimentConfig::from_json(
            r#"{"kind":"les-poisson","N":[100],"alpha":[0.3],"E0":[0.5],"I":[[0,2]],"trials":10,"seed":5}"#,
        )
        .unwrap();
        assert_eq!(c.n, vec![100]);
        assert_eq!(c.windows, vec![[0.0, 2.0]]);
        let g = c.resolved().grid().unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].e0, Some(0.5));
    }

    #[test]
    fn alpha_below_beta_required() {
        let mut c = ExperimentConfig::new(ExperimentKind::LesPoisson);
        c.n = vec![1000];
        c.alpha = vec![0.6];
        c.beta = vec![0.5];
        let e = c.resolved().grid().unwrap_err().to_string();
        assert!(e.contains("alpha < beta"), "{e}");
    }

    #[test]
    fn block_presets_have_interiors() {
        let mut c = ExperimentConfig::new(ExperimentKind::BlockCompare);
        c.trials = Some(100);
        let g = c.resolved().grid().unwrap();
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn manifest_is_accepted() {
        let c = ExperimentConfig::new(ExperimentKind::Dos);
        let wrapped = format!(r#"{{"seed_rule":"x","config":{}}}"#, c.to_json());
        assert_eq!(ExperimentConfig::from_json(&wrapped).unwrap(), c);
    }

    #[test]
    fn widths_become_windows() {
        let mut c = ExperimentConfig::new(ExperimentKind::Minami);
        c.widths = vec![1.0, 4.0];
        let r = c.resolved();
        assert_eq!(r.windows, vec![[-0.5, 0.5], [-2.0, 2.0]]);
        assert_eq!(r.resolved(), r);
    }
}
