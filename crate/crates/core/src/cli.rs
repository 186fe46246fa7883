//! Command-line front end.
//!
//! Experiment subcommands build an [`ExperimentConfig`] from an optional
//! `--config` file, the `RBMLAB_WORKERS`/`RBMLAB_OUTPUT` environment variables
//! and flags, in increasing order of precedence. Flags carry the JSON key
//! names. List flags accept `a,b,c` or an inclusive range `start:stop:step`.
//!
//! Exit status: 0 on success, 2 for configuration errors, 1 for runtime
//! failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::eigensolver::spectrum_of;
use crate::ensemble::{BandMatrix, BandMatrixParams, EntryDistribution};
use crate::error::{Error, Result};
use crate::localization::MomentEstimator;
use crate::montecarlo::{random_master_seed, run_experiment, BlockMode, ExperimentConfig, ExperimentKind};
use crate::spectralstats::{Binning, Unfolding};

#[derive(Debug, Parser)]
#[command(
    name = "rbmlab",
    version,
    about = "Monte Carlo laboratory for random band matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample one band matrix and write its binary encoding.
    Sample(SampleArgs),
    /// Eigenvalues of a sampled or stored band matrix as CSV.
    Spectrum(SpectrumArgs),
    /// Empirical density of states against the semicircle density n_sc.
    Dos(ExperimentArgs),
    /// Local eigenvalue counts in E0 + I/(2N+1) with a Poisson goodness-of-fit test
    /// at rate b_N.
    Les(ExperimentArgs),
    /// First moment E Tr chi_I of the local count, linear in |I|.
    Wegner(ExperimentArgs),
    /// Second factorial moment E[c(c-1)] of the local count, quadratic in |I|.
    Minami(ExperimentArgs),
    /// Mean local count b_N, pointwise at E0 or integrated over an energy range J.
    Intensity(ExperimentArgs),
    /// Log characteristic function of the local count against b_N (e^{it} - 1).
    Charexp(ExperimentArgs),
    /// Mean consecutive-gap ratio of the eigenvalues near E0.
    Gapratio(ExperimentArgs),
    /// Global count xi against the summed block count zeta for a block decomposition.
    Blocks(ExperimentArgs),
    /// Decay of fractional Green's function moments E|G(j,k;E+i eps)|^s in |j-k|.
    Localize(ExperimentArgs),
    /// Mean gap ratio across band exponents, from Poisson (2 ln 2 - 1) toward GOE.
    Phase(ExperimentArgs),
    /// Check a configuration and print the resolved grid.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long = "N")]
    n: usize,
    /// Band exponent; the half band width is floor(N^alpha).
    #[arg(long, conflicts_with = "half_band")]
    alpha: Option<f64>,
    #[arg(long = "half-band")]
    half_band: Option<usize>,
    #[arg(long)]
    periodic: bool,
    /// gaussian, uniform or rademacher.
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Binary matrix written by `sample`.
    #[arg(long, conflicts_with_all = ["n", "alpha", "half_band"])]
    input: Option<PathBuf>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "half-band")]
    half_band: Option<usize>,
    #[arg(long)]
    periodic: bool,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Experiment kind when no config file is given.
    #[arg(long)]
    kind: Option<String>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Debug, Args, Default)]
struct ExperimentArgs {
    /// JSON config or run manifest; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long, visible_alias = "alphas")]
    alpha: Option<String>,
    #[arg(long, visible_alias = "betas")]
    beta: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    weak: Option<bool>,
    #[arg(long = "E0")]
    e0: Option<String>,
    /// Rescaled window `lo,hi`; repeat for several windows.
    #[arg(long = "I")]
    windows: Vec<String>,
    /// Window lengths, each turned into `[-w/2, w/2]`.
    #[arg(long)]
    widths: Option<String>,
    /// Energy range `a,b` for the integrated intensity.
    #[arg(long = "J")]
    energy_range: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "t-grid", alias = "t_grid")]
    t_grid: Option<String>,
    #[arg(long)]
    distances: Option<String>,
    #[arg(long)]
    halfwidth: Option<f64>,
    /// coupled or independent.
    #[arg(long)]
    mode: Option<String>,
    /// dimension or half-size.
    #[arg(long)]
    unfolding: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// fd, uniform:BINS or edges:e0,e1,...
    #[arg(long)]
    binning: Option<String>,
    /// mean or mom:GROUPS.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    periodic: Option<bool>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parse `argv` (including the program name), run and return the exit status.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let (kind, args) = match cmd {
        Command::Sample(a) => return sample(a),
        Command::Spectrum(a) => return spectrum(a),
        Command::Validate(a) => return validate(a),
        Command::Dos(a) => (ExperimentKind::Dos, a),
        Command::Les(a) => (ExperimentKind::LesPoisson, a),
        Command::Wegner(a) => (ExperimentKind::Wegner, a),
        Command::Minami(a) => (ExperimentKind::Minami, a),
        Command::Intensity(a) => (ExperimentKind::Intensity, a),
        Command::Charexp(a) => (ExperimentKind::CharExponent, a),
        Command::Gapratio(a) => (ExperimentKind::GapRatio, a),
        Command::Blocks(a) => (ExperimentKind::BlockCompare, a),
        Command::Localize(a) => (ExperimentKind::Localization, a),
        Command::Phase(a) => (ExperimentKind::PhaseDiagram, a),
    };
    let mut cfg = build_config(Some(kind), &args)?;
    cfg.resolved().grid()?;
    if cfg.seed.is_none() {
        let seed = random_master_seed();
        println!("master seed: {seed}");
        cfg.seed = Some(seed);
    }
    let manifest = run_experiment(&cfg)?;
    let dir = manifest.config.output.clone().unwrap_or_default();
    println!(
        "{} finished: {} grid point(s), master seed {}",
        kind,
        manifest.grid.len(),
        manifest.master_seed
    );
    println!("wrote {}", dir.join("manifest.json").display());
    for f in &manifest.files {
        println!("wrote {}", dir.join(&f.path).display());
    }
    if !manifest.failures.is_empty() {
        println!("{} trial(s) were retried", manifest.failures.len());
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let kind = a.kind.as_deref().map(ExperimentKind::from_name).transpose()?;
    let cfg = build_config(kind, &a.exp)?.resolved();
    let grid = cfg.grid()?;
    let out = serde_json::json!({ "config": cfg, "grid": grid });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => {
            Error::config(format!("cannot read config {}: {source}", path.display()))
        }
        other => other,
    })
}

fn build_config(kind: Option<ExperimentKind>, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, kind) {
        (Some(path), k) => {
            let c = load_config(path)?;
            if let Some(k) = k {
                if c.kind != k {
                    return Err(Error::config(format!(
                        "config describes a {} experiment, not {k}",
                        c.kind
                    )));
                }
            }
            c
        }
        (None, Some(k)) => ExperimentConfig::new(k),
        (None, None) => return Err(Error::config("either --config or --kind is required")),
    };
    cfg.apply_env()?;
    if let Some(v) = &a.n {
        cfg.n = parse_usize_list(v, "N")?;
    }
    if let Some(v) = &a.alpha {
        cfg.alpha = parse_f64_list(v, "alpha")?;
    }
    if let Some(v) = &a.beta {
        cfg.beta = parse_f64_list(v, "beta")?;
    }
    if let Some(v) = a.mu {
        cfg.mu = Some(v);
    }
    if let Some(v) = a.delta {
        cfg.delta = Some(v);
    }
    if let Some(v) = a.weak {
        cfg.weak = Some(v);
    }
    if let Some(v) = &a.e0 {
        cfg.e0 = parse_f64_list(v, "E0")?;
    }
    if !a.windows.is_empty() {
        cfg.windows = a
            .windows
            .iter()
            .map(|w| parse_pair(w, "I"))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = &a.widths {
        cfg.widths = parse_f64_list(v, "widths")?;
    }
    if let Some(v) = &a.energy_range {
        cfg.energy_range = Some(parse_pair(v, "J")?);
    }
    if let Some(v) = a.nodes {
        cfg.nodes = Some(v);
    }
    if let Some(v) = &a.s {
        cfg.s = parse_f64_list(v, "s")?;
    }
    if let Some(v) = &a.epsilon {
        cfg.epsilon = parse_f64_list(v, "epsilon")?;
    }
    if let Some(v) = &a.t_grid {
        cfg.t_grid = Some(parse_f64_list(v, "t-grid")?);
    }
    if let Some(v) = &a.distances {
        cfg.distances = Some(parse_usize_list(v, "distances")?);
    }
    if let Some(v) = a.halfwidth {
        cfg.halfwidth = Some(v);
    }
    if let Some(v) = &a.mode {
        cfg.mode = Some(match v.as_str() {
            "coupled" => BlockMode::Coupled,
            "independent" => BlockMode::Independent,
            other => return Err(Error::config(format!("unknown block mode '{other}'"))),
        });
    }
    if let Some(v) = &a.unfolding {
        cfg.unfolding = Some(match v.as_str() {
            "dimension" => Unfolding::Dimension,
            "half-size" => Unfolding::HalfSize,
            other => return Err(Error::config(format!("unknown unfolding '{other}'"))),
        });
    }
    if let Some(v) = a.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = &a.binning {
        cfg.binning = Some(parse_binning(v)?);
    }
    if let Some(v) = &a.estimator {
        cfg.estimator = Some(parse_estimator(v)?);
    }
    if let Some(v) = &a.distribution {
        cfg.distribution = Some(EntryDistribution::from_name(v)?);
    }
    if let Some(v) = a.periodic {
        cfg.periodic = Some(v);
    }
    if let Some(v) = a.trials {
        cfg.trials = Some(v);
    }
    if let Some(v) = a.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = a.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = &a.output {
        cfg.output = Some(v.clone());
    }
    Ok(cfg)
}

fn bad(what: &str, text: &str) -> Error {
    Error::config(format!("cannot parse {what} from '{text}'"))
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| bad(what, text))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(what, text))
    }
}

/// `a,b,c` or the inclusive range `start:stop:step`.
pub fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(what, text));
        }
        let (start, stop, step) = (
            parse_f64(parts[0], what)?,
            parse_f64(parts[1], what)?,
            parse_f64(parts[2], what)?,
        );
        if !(step > 0.0) || stop < start {
            return Err(Error::config(format!(
                "range {text} for {what} needs step > 0 and start <= stop"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // round away the accumulated binary noise of start + k*step
        return Ok((0..count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    text.split(',').map(|t| parse_f64(t, what)).collect()
}

pub fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    parse_f64_list(text, what)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad(what, text))
            }
        })
        .collect()
}

fn parse_pair(text: &str, what: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| parse_f64(t, what))
        .collect::<Result<_>>()?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(bad(what, text)),
    }
}

fn parse_binning(text: &str) -> Result<Binning> {
    match text.split_once(':') {
        None if text == "fd" || text == "freedman-diaconis" => Ok(Binning::FreedmanDiaconis),
        Some(("uniform", bins)) => Ok(Binning::Uniform {
            bins: bins.trim().parse().map_err(|_| bad("binning", text))?,
        }),
        Some(("edges", edges)) => Ok(Binning::Edges {
            edges: parse_f64_list(edges, "binning")?,
        }),
        _ => Err(bad("binning", text)),
    }
}

fn parse_estimator(text: &str) -> Result<MomentEstimator> {
    match text.split_once(':') {
        None if text == "mean" => Ok(MomentEstimator::Mean),
        Some(("mom", groups)) => Ok(MomentEstimator::MedianOfMeans {
            groups: groups.trim().parse().map_err(|_| bad("estimator", text))?,
        }),
        _ => Err(bad("estimator", text)),
    }
}

fn matrix_params(
    n: usize,
    alpha: Option<f64>,
    half_band: Option<usize>,
    periodic: bool,
    distribution: Option<&str>,
    seed: Option<u64>,
) -> Result<BandMatrixParams> {
    let params = match (alpha, half_band) {
        (_, Some(l)) => BandMatrixParams::from_half_band(n, l)?,
        (Some(a), None) => BandMatrixParams::from_exponent(n, a)?,
        (None, None) => return Err(Error::config("give --alpha or --half-band")),
    };
    let seed = seed.unwrap_or_else(|| {
        let s = random_master_seed();
        println!("seed: {s}");
        s
    });
    let dist = distribution
        .map(EntryDistribution::from_name)
        .transpose()?
        .unwrap_or_default();
    let params = params
        .with_periodic(periodic)
        .with_distribution(dist)
        .with_seed(seed);
    params.validate()?;
    Ok(params)
}

fn sample(a: SampleArgs) -> Result<()> {
    let params = matrix_params(
        a.n,
        a.alpha,
        a.half_band,
        a.periodic,
        a.distribution.as_deref(),
        a.seed,
    )?;
    let m = BandMatrix::sample(&params)?;
    std::fs::write(&a.output, m.to_bytes()).map_err(|e| Error::io(&a.output, e))?;
    println!(
        "wrote {} (N = {}, L = {}, seed = {})",
        a.output.display(),
        params.n_half,
        params.half_band,
        params.seed
    );
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    let m = match &a.input {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            BandMatrix::from_bytes(&bytes)?
        }
        None => {
            let n = a.n.ok_or_else(|| Error::config("give --input or --N"))?;
            let params = matrix_params(
                n,
                a.alpha,
                a.half_band,
                a.periodic,
                a.distribution.as_deref(),
                a.seed,
            )?;
            BandMatrix::sample(&params)?
        }
    };
    let spec = spectrum_of(&m)?;
    let mut text = String::from("index,eigenvalue\n");
    for (k, e) in spec.eigenvalues.iter().enumerate() {
        text.push_str(&format!("{k},{e}\n"));
    }
    match &a.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}
