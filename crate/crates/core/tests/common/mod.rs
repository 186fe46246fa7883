#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rbmlab::montecarlo::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentManifest};

/// Comma separated table with a header row.
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Csv {
        let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines();
        let header = lines
            .next()
            .expect("header")
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Csv { header, rows }
    }

    pub fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name} in {:?}", self.header))
    }

    pub fn f64s(&self, name: &str) -> Vec<f64> {
        let c = self.col(name);
        self.rows.iter().map(|r| r[c].parse().expect("number")).collect()
    }

    /// Values of `value` grouped by the text of `key`, in first-seen order of keys.
    pub fn grouped(&self, key: &str, value: &str) -> Vec<(String, Vec<f64>)> {
        let (k, v) = (self.col(key), self.col(value));
        let mut order = Vec::new();
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            if !groups.contains_key(&r[k]) {
                order.push(r[k].clone());
            }
            groups
                .entry(r[k].clone())
                .or_default()
                .push(r[v].parse().expect("number"));
        }
        order
            .into_iter()
            .map(|key| {
                let vals = groups.remove(&key).expect("group");
                (key, vals)
            })
            .collect()
    }
}

pub fn config(kind: ExperimentKind, out: &Path, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.seed = Some(seed);
    c.output = Some(out.to_path_buf());
    c
}

pub fn run(cfg: &ExperimentConfig) -> ExperimentManifest {
    run_experiment(cfg).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.kind))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `(4 - E^2)^{1/2} / 2 pi` on the support.
pub fn n_sc(e: f64) -> f64 {
    if e.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - e * e).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// Composite Simpson rule with `2 m` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r^2)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

/// Gaussian orthogonal ensemble of dimension `n` scaled to the support `[-2, 2]`.
pub fn goe(n: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let mut g = rbmlab::rng::Stream::new(seed);
    let a = nalgebra::DMatrix::from_fn(n, n, |_, _| g.gaussian());
    (&a + a.transpose()) / (2.0 * n as f64).sqrt()
}

/// Sorted eigenvalues of a dense symmetric matrix.
pub fn dense_eigenvalues(m: nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Mean gap ratio of sorted levels, computed directly.
pub fn gap_ratio(levels: &[f64]) -> f64 {
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let r: Vec<f64> = gaps.windows(2).map(|g| g[0].min(g[1]) / g[0].max(g[1])).collect();
    mean(&r)
}
