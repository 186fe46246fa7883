//! Seeded experiment orchestration.
//!
//! Every trial of grid point `g` receives the seed
//! [`derive_trial_seed`]`(master, g, t)`. Trials run on a pool of `workers`
//! threads and are collected in trial order, so aggregates and raw tables do
//! not depend on the worker count. A trial that fails numerically is retried
//! once with [`retry_seed`]; more than 0.1% failures abort the experiment.
//!
//! A run directory holds `manifest.json`, `summary.json` and `raw/*.csv`.

mod config;
mod kinds;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    BlockMode, ExperimentConfig, ExperimentKind, GridPoint, BLOCK_PRESET_DELTA, ENV_OUTPUT, ENV_WORKERS,
};
pub use output::{sha256_hex, FileRecord, Table};

use crate::error::{Error, Result};
pub use crate::rng::{derive_trial_seed, retry_seed};

/// Largest tolerated fraction of failed trials per grid point.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

/// Human-readable statement of the seeding rule, stored in manifests.
pub const SEED_RULE: &str = "trial seed = mix(mix(mix(master + G) + (grid + 1) G) + (trial + 1) G) \
with G = 0x9E3779B97F4A7C15 and mix the SplitMix64 finalizer; a failed trial is retried once \
with mix(seed ^ 0xD1B54A32D192ED03)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub grid_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
    /// Whether the retry succeeded.
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub phases: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    /// Resolved configuration including the master seed.
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub seed_rule: String,
    pub workers: usize,
    pub grid: Vec<GridPoint>,
    pub timings: Timings,
    pub failures: Vec<FailureRecord>,
    pub summary: serde_json::Value,
    pub files: Vec<FileRecord>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One trial's value with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord<T> {
    pub trial: usize,
    pub seed: u64,
    pub value: T,
}

/// Executes trials on a fixed-size pool with the retry policy.
pub struct Runner {
    master: u64,
    pool: rayon::ThreadPool,
    failures: Mutex<Vec<FailureRecord>>,
}

impl Runner {
    pub fn new(master: u64, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Runner {
            master,
            pool,
            failures: Mutex::new(Vec::new()),
        })
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Run `trials` trials of grid point `grid`; `f` receives the trial seed.
    pub fn trials<T, F>(&self, grid: usize, trials: usize, f: F) -> Result<Vec<TrialRecord<T>>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        let master = self.master;
        let results: Vec<Result<Option<TrialRecord<T>>>> = self.pool.install(|| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_trial_seed(master, grid as u64, t as u64);
                    match f(seed) {
                        Ok(value) => Ok(Some(TrialRecord {
                            trial: t,
                            seed,
                            value,
                        })),
                        Err(e @ Error::Config(_)) => Err(e),
                        Err(first) => {
                            let again = retry_seed(seed);
                            log::warn!("grid {grid} trial {t}: {first}; retrying with seed {again}");
                            let outcome = f(again);
                            let recovered = outcome.is_ok();
                            self.failures.lock().expect("failure log").push(FailureRecord {
                                grid_index: grid,
                                trial: t,
                                seed,
                                message: first.to_string(),
                                recovered,
                            });
                            match outcome {
                                Ok(value) => Ok(Some(TrialRecord {
                                    trial: t,
                                    seed: again,
                                    value,
                                })),
                                Err(e @ Error::Config(_)) => Err(e),
                                Err(_) => Ok(None),
                            }
                        }
                    }
                })
                .collect()
        });
        let mut out = Vec::with_capacity(trials);
        let mut lost = 0usize;
        for r in results {
            match r? {
                Some(rec) => out.push(rec),
                None => lost += 1,
            }
        }
        if lost as f64 > MAX_FAILURE_FRACTION * trials as f64 {
            return Err(Error::Aborted(format!(
                "{lost} of {trials} trials failed at grid point {grid}"
            )));
        }
        Ok(out)
    }

    pub fn failures(&self) -> Vec<FailureRecord> {
        let mut f = self.failures.lock().expect("failure log").clone();
        f.sort_by_key(|r| (r.grid_index, r.trial));
        f
    }
}

/// Default worker count: the available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Fresh master seed from the operating system.
pub fn random_master_seed() -> u64 {
    rand::random()
}

/// Default run directory for a kind and seed.
pub fn default_output(kind: ExperimentKind, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{seed}", kind.name()))
}

/// Validate, run every grid point and write the run directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentManifest> {
    let start = Instant::now();
    let mut phases = BTreeMap::new();
    let mut cfg = config.resolved();
    let master = match cfg.seed {
        Some(s) => s,
        None => {
            let s = random_master_seed();
            log::warn!("no master seed given; drew {s}");
            s
        }
    };
    cfg.seed = Some(master);
    let workers = cfg.workers.unwrap_or_else(default_workers);
    let output = cfg
        .output
        .clone()
        .unwrap_or_else(|| default_output(cfg.kind, master));
    let grid = cfg.grid()?;
    phases.insert("validate".to_string(), start.elapsed().as_secs_f64());

    let t_run = Instant::now();
    let runner = Runner::new(master, workers)?;
    let result = kinds::run_kind(&cfg, &grid, &runner)?;
    phases.insert("run".to_string(), t_run.elapsed().as_secs_f64());

    let t_write = Instant::now();
    let mut writer = output::RunWriter::new(&output)?;
    let mut files = Vec::new();
    for (name, table) in &result.tables {
        files.push(writer.write(&format!("raw/{name}.csv"), table.to_csv().as_bytes())?);
    }
    let summary_text = serde_json::to_string_pretty(&result.summary)?;
    files.push(writer.write("summary.json", summary_text.as_bytes())?);
    phases.insert("write".to_string(), t_write.elapsed().as_secs_f64());

    // the echoed config keeps the worker count and output it was run with
    let mut echo = cfg.clone();
    echo.workers = Some(workers);
    echo.output = Some(output.clone());
    let manifest = ExperimentManifest {
        tool: "rbmlab".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo,
        master_seed: master,
        seed_rule: SEED_RULE.to_string(),
        workers,
        grid,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            phases,
        },
        failures: runner.failures(),
        summary: result.summary,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    writer.write("manifest.json", text.as_bytes())?;
    writer.commit();
    Ok(manifest)
}

/// Rerun the configuration stored in a manifest, optionally into another
/// directory and with another worker count.
pub fn rerun_from_manifest(
    manifest: &Path,
    output: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<ExperimentManifest> {
    let mut cfg = ExperimentConfig::load(manifest)?;
    if output.is_some() {
        cfg.output = output;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    run_experiment(&cfg)
}
