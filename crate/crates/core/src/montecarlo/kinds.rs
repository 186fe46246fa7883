//! Per-kind trial functions and aggregation.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::config::{BlockMode, ExperimentConfig, ExperimentKind, GridPoint};
use super::output::{num, Table};
use super::Runner;
use crate::blockdecomp::{
    coupled_counts, make_block_scheme, sample_block_counts, CoupledTrial, CouplingReport,
};
use crate::eigensolver::{spectrum_of, BandCounter, IntervalCount, Spectrum};
use crate::ensemble::{BandMatrix, BandMatrixParams};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, mean_stderr, slope_through_origin};
use crate::localization::{decay_trial, fit_decay, kappa_ratio, localization_scaling, DecayStatus};
use crate::spectralstats::{
    char_exponent, empirical_dos, gap_ratio_statistic, minami_moment, poisson_exponent_check,
    poisson_fit_test, semicircle_density, semicircle_measure, wegner_moment, RescaleWindow, GOE_GAP_RATIO,
    MIN_FIT_SAMPLES, POISSON_GAP_RATIO,
};

/// `(|I|, moment, stderr)`.
type MomentRow = (f64, f64, f64);
/// `(alpha, s, epsilon)` as bit patterns; `None` for the default `1/N`.
type DecayKey = (u64, u64, Option<u64>);

/// Raw tables (written as `raw/<name>.csv`) and the summary object.
pub(super) struct KindResult {
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
}

pub(super) fn run_kind(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    match cfg.kind {
        ExperimentKind::Dos => run_dos(cfg, grid, runner),
        ExperimentKind::LesPoisson
        | ExperimentKind::Wegner
        | ExperimentKind::Minami
        | ExperimentKind::CharExponent => run_counting(cfg, grid, runner),
        ExperimentKind::Intensity if cfg.energy_range.is_some() => run_integrated(cfg, grid, runner),
        ExperimentKind::Intensity => run_counting(cfg, grid, runner),
        ExperimentKind::GapRatio | ExperimentKind::PhaseDiagram => run_gap_ratio(cfg, grid, runner),
        ExperimentKind::BlockCompare => run_blocks(cfg, grid, runner),
        ExperimentKind::Localization => run_localization(cfg, grid, runner),
    }
}

fn seeded(params: &BandMatrixParams, seed: u64) -> Result<BandMatrix> {
    BandMatrix::sample(&params.clone().with_seed(seed))
}

/// Expected count of a rescaled window when the local density is `n_sc(E0)`.
fn pointwise_reference(w: &RescaleWindow, n_half: usize) -> f64 {
    let dim = (2 * n_half + 1) as f64;
    semicircle_density(w.e0) * w.length() * dim / w.unfolding.scale(n_half)
}

fn point_json(p: &GridPoint) -> Value {
    serde_json::to_value(p).expect("grid point serializes")
}

fn run_dos(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let binning = cfg.binning.clone().unwrap_or_default();
    let mut table = Table::new(&[
        "point", "N", "alpha", "bin_lo", "bin_hi", "center", "density", "n_sc",
    ]);
    let mut points = Vec::new();
    for p in grid {
        let params = cfg.matrix_params(p)?;
        let spectra: Vec<Spectrum> = runner
            .trials(p.index, cfg.trials(), |seed| spectrum_of(&seeded(&params, seed)?))?
            .into_iter()
            .map(|r| r.value)
            .collect();
        let dos = empirical_dos(&spectra, &binning)?;
        for (k, d) in dos.densities.iter().enumerate() {
            let c = dos.grid[k];
            table.push(vec![
                num(p.index),
                num(p.n_half),
                num(p.alpha),
                num(dos.edges[k]),
                num(dos.edges[k + 1]),
                num(c),
                num(d),
                num(semicircle_density(c)),
            ]);
        }
        points.push(json!({
            "point": point_json(p),
            "bins": dos.densities.len(),
            "total_mass": dos.total_mass(),
            "sup_distance": dos.sup_distance_to_semicircle(-1.9, 1.9),
            "sup_distance_range": [-1.9, 1.9],
        }));
    }
    let binning_json = serde_json::to_value(&binning)?;
    Ok(KindResult {
        tables: vec![("dos".into(), table)],
        summary: json!({ "kind": "dos", "binning": binning_json, "points": points }),
    })
}

/// Window counts of one grid point.
struct PointCounts {
    window: RescaleWindow,
    counts: Vec<u64>,
}

fn count_point(
    cfg: &ExperimentConfig,
    p: &GridPoint,
    runner: &Runner,
    raw: &mut Table,
) -> Result<PointCounts> {
    let params = cfg.matrix_params(p)?;
    let window = cfg.rescale_window(p)?;
    let bounds = if window.is_empty() {
        None
    } else {
        Some(window.physical(p.n_half)?)
    };
    let records = runner.trials(p.index, cfg.trials(), |seed| match bounds {
        None => Ok(0u64),
        Some((a, b)) => {
            let m = seeded(&params, seed)?;
            Ok(BandCounter::new(m.band()).count_in(a, b)?.count as u64)
        }
    })?;
    for r in &records {
        raw.push(vec![
            num(p.index),
            num(r.trial),
            num(r.seed),
            num(p.n_half),
            num(p.alpha),
            num(window.e0),
            num(window.lo),
            num(window.hi),
            num(r.value),
        ]);
    }
    Ok(PointCounts {
        window,
        counts: records.into_iter().map(|r| r.value).collect(),
    })
}

fn as_interval_counts(pc: &PointCounts) -> Vec<IntervalCount> {
    pc.counts
        .iter()
        .map(|&c| IntervalCount {
            a: pc.window.lo,
            b: pc.window.hi,
            count: c as usize,
        })
        .collect()
}

fn run_counting(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let kind = cfg.kind;
    let mut raw = Table::new(&["point", "trial", "seed", "N", "alpha", "E0", "lo", "hi", "count"]);
    let mut stats = Table::new(&[
        "point",
        "N",
        "alpha",
        "E0",
        "lo",
        "hi",
        "length",
        "statistic",
        "value",
        "stderr",
        "reference",
    ]);
    let mut poisson = Table::new(&["point", "k", "observed", "expected"]);
    let mut charexp = Table::new(&[
        "point",
        "t",
        "re_psi",
        "im_psi",
        "stderr",
        "valid",
        "re_poisson",
        "im_poisson",
    ]);
    let mut points = Vec::new();
    // (N, alpha, E0) -> (|I|, moment, stderr)
    let mut families: BTreeMap<(usize, u64, u64), Vec<MomentRow>> = BTreeMap::new();

    for p in grid {
        let pc = count_point(cfg, p, runner, &mut raw)?;
        let w = pc.window;
        let values: Vec<f64> = pc.counts.iter().map(|&c| c as f64).collect();
        let (b_n, b_se) = mean_stderr(&values);
        let reference = pointwise_reference(&w, p.n_half);
        let mut entry = json!({
            "point": point_json(p),
            "trials": pc.counts.len(),
            "b_N": b_n,
            "b_N_stderr": b_se,
            "pointwise_reference": reference,
        });
        let mut stat_row = |name: &str, v: f64, se: f64, reference: f64| {
            stats.push(vec![
                num(p.index),
                num(p.n_half),
                num(p.alpha),
                num(w.e0),
                num(w.lo),
                num(w.hi),
                num(w.length()),
                name.to_string(),
                num(v),
                num(se),
                num(reference),
            ]);
        };
        stat_row("b_N", b_n, b_se, reference);

        match kind {
            ExperimentKind::LesPoisson => {
                let lambda = cfg.lambda.unwrap_or(b_n);
                if pc.counts.len() >= MIN_FIT_SAMPLES && lambda > 0.0 {
                    let report = poisson_fit_test(&pc.counts, lambda)?;
                    for row in &report.table {
                        poisson.push(vec![
                            num(p.index),
                            num(row.k),
                            num(row.observed),
                            num(row.expected),
                        ]);
                    }
                    entry["poisson_fit"] = json!({
                        "lambda": report.lambda,
                        "lambda_source": if cfg.lambda.is_some() { "config" } else { "b_N" },
                        "tv_distance": report.tv_distance,
                        "chi_square": report.chi_square,
                        "dof": report.dof,
                    });
                } else {
                    entry["poisson_fit"] = json!({
                        "skipped": format!("needs at least {MIN_FIT_SAMPLES} trials and a positive rate")
                    });
                }
            }
            ExperimentKind::CharExponent => {
                let est = char_exponent(&pc.counts, cfg.t_grid.as_deref())?;
                let check = poisson_exponent_check(&est, b_n, b_se);
                for (k, &t) in est.t_grid.iter().enumerate() {
                    let unit_re = t.cos() - 1.0;
                    let unit_im = t.sin();
                    charexp.push(vec![
                        num(p.index),
                        num(t),
                        num(est.psi[k].re),
                        num(est.psi[k].im),
                        num(est.stderr[k]),
                        num(est.valid[k]),
                        num(b_n * unit_re),
                        num(b_n * unit_im),
                    ]);
                }
                entry["exponent_check"] = json!({
                    "max_z": check.max_z,
                    "max_abs": check.max_abs,
                    "t_at_max": check.t_at_max,
                    "valid_points": check.valid_points,
                    "within_3_stderr": check.passes(3.0),
                });
            }
            ExperimentKind::Wegner | ExperimentKind::Minami => {
                let samples = as_interval_counts(&pc);
                let (name, m) = if kind == ExperimentKind::Wegner {
                    ("wegner", wegner_moment(&samples)?)
                } else {
                    ("minami", minami_moment(&samples)?)
                };
                let at_least_one =
                    pc.counts.iter().filter(|&&c| c >= 1).count() as f64 / pc.counts.len() as f64;
                let at_least_two =
                    pc.counts.iter().filter(|&&c| c >= 2).count() as f64 / pc.counts.len() as f64;
                stat_row(name, m.value, m.stderr, f64::NAN);
                entry["moment"] = json!({
                    "name": name,
                    "value": m.value,
                    "stderr": m.stderr,
                    "p_count_ge_1": at_least_one,
                    "p_count_ge_2": at_least_two,
                });
                families
                    .entry((p.n_half, p.alpha.to_bits(), w.e0.to_bits()))
                    .or_default()
                    .push((w.length(), m.value, m.stderr));
            }
            _ => {}
        }
        points.push(entry);
    }

    let mut fits = Vec::new();
    for ((n_half, alpha, e0), rows) in &families {
        let alpha = f64::from_bits(*alpha);
        let e0 = f64::from_bits(*e0);
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let fit = if kind == ExperimentKind::Wegner {
            json!({ "slope_through_origin": slope_through_origin(&x, &y) })
        } else {
            let usable: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.0 > 0.0 && r.1 > 0.0).collect();
            let lx: Vec<f64> = usable.iter().map(|r| r.0.ln()).collect();
            let ly: Vec<f64> = usable.iter().map(|r| r.1.ln()).collect();
            json!({ "log_log": linear_fit(&lx, &ly, None) })
        };
        fits.push(json!({ "N": n_half, "alpha": alpha, "E0": e0, "lengths": x, "fit": fit }));
    }

    let mut tables = vec![("counts".to_string(), raw), ("statistics".to_string(), stats)];
    match kind {
        ExperimentKind::LesPoisson => tables.push(("poisson".into(), poisson)),
        ExperimentKind::CharExponent => tables.push(("char_exponent".into(), charexp)),
        _ => {}
    }
    let mut summary = json!({ "kind": kind.name(), "points": points });
    if !fits.is_empty() {
        summary["scaling"] = Value::Array(fits);
    }
    Ok(KindResult { tables, summary })
}

fn run_integrated(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let [ja, jb] = cfg
        .energy_range
        .ok_or_else(|| Error::config("integrated intensity needs J"))?;
    let nodes = cfg.nodes.unwrap_or(0);
    let unfolding = cfg.unfolding.unwrap_or_default();
    let h = (jb - ja) / nodes as f64;
    let mut raw = Table::new(&["point", "trial", "seed", "N", "alpha", "lo", "hi", "integral"]);
    let mut stats = Table::new(&["point", "N", "alpha", "lo", "hi", "value", "stderr", "reference"]);
    let mut points = Vec::new();
    for p in grid {
        let params = cfg.matrix_params(p)?;
        let [lo, hi] = p.window.ok_or_else(|| Error::config("grid point without I"))?;
        let bounds = (0..nodes)
            .map(|k| {
                let e0 = ja + (k as f64 + 0.5) * h;
                let w = RescaleWindow::new(e0, lo, hi)?.with_unfolding(unfolding);
                if w.is_empty() {
                    Ok(None)
                } else {
                    w.physical(p.n_half).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let records = runner.trials(p.index, cfg.trials(), |seed| {
            if bounds.iter().all(Option::is_none) {
                return Ok(0.0);
            }
            let m = seeded(&params, seed)?;
            let mut counter = BandCounter::new(m.band());
            let mut sum = 0.0;
            for (a, b) in bounds.iter().flatten() {
                sum += counter.count_in(*a, *b)?.count as f64;
            }
            Ok(sum * h)
        })?;
        for r in &records {
            raw.push(vec![
                num(p.index),
                num(r.trial),
                num(r.seed),
                num(p.n_half),
                num(p.alpha),
                num(lo),
                num(hi),
                num(r.value),
            ]);
        }
        let values: Vec<f64> = records.iter().map(|r| r.value).collect();
        let (value, stderr) = mean_stderr(&values);
        let dim = (2 * p.n_half + 1) as f64;
        let reference = (hi - lo) * semicircle_measure(ja, jb) * dim / unfolding.scale(p.n_half);
        stats.push(vec![
            num(p.index),
            num(p.n_half),
            num(p.alpha),
            num(lo),
            num(hi),
            num(value),
            num(stderr),
            num(reference),
        ]);
        points.push(json!({
            "point": point_json(p),
            "J": [ja, jb],
            "nodes": nodes,
            "value": value,
            "stderr": stderr,
            "reference": reference,
            "relative_error": (value - reference) / reference,
        }));
    }
    Ok(KindResult {
        tables: vec![("integrals".into(), raw), ("statistics".into(), stats)],
        summary: json!({ "kind": "intensity", "integrated": true, "points": points }),
    })
}

fn run_gap_ratio(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let halfwidth = cfg.halfwidth.unwrap_or(0.5);
    let mut raw = Table::new(&["point", "trial", "seed", "N", "alpha", "E0", "r"]);
    let mut mean = Table::new(&["point", "N", "alpha", "E0", "mean_r", "stderr", "poisson", "goe"]);
    let mut points = Vec::new();
    for p in grid {
        let params = cfg.matrix_params(p)?;
        let e0 = p.e0.unwrap_or(0.0);
        let records = runner.trials(p.index, cfg.trials(), |seed| {
            let spec = spectrum_of(&seeded(&params, seed)?)?;
            gap_ratio_statistic(&spec, e0, halfwidth)
        })?;
        for r in &records {
            raw.push(vec![
                num(p.index),
                num(r.trial),
                num(r.seed),
                num(p.n_half),
                num(p.alpha),
                num(e0),
                num(r.value),
            ]);
        }
        let values: Vec<f64> = records.iter().map(|r| r.value).collect();
        let (m, se) = mean_stderr(&values);
        mean.push(vec![
            num(p.index),
            num(p.n_half),
            num(p.alpha),
            num(e0),
            num(m),
            num(se),
            num(POISSON_GAP_RATIO),
            num(GOE_GAP_RATIO),
        ]);
        points.push(json!({ "point": point_json(p), "mean_r": m, "stderr": se }));
    }
    let name = if cfg.kind == ExperimentKind::PhaseDiagram {
        "phase"
    } else {
        "gap_ratio_mean"
    };
    Ok(KindResult {
        tables: vec![("gap_ratio".into(), raw), (name.into(), mean)],
        summary: json!({
            "kind": cfg.kind.name(),
            "halfwidth": halfwidth,
            "poisson_reference": POISSON_GAP_RATIO,
            "goe_reference": GOE_GAP_RATIO,
            "points": points,
        }),
    })
}

fn run_blocks(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let mode = cfg.mode.unwrap_or_default();
    let mut raw = Table::new(&[
        "point", "trial", "seed", "N", "alpha", "beta", "mode", "xi", "zeta",
    ]);
    let mut trend = Table::new(&[
        "N",
        "alpha",
        "beta",
        "mode",
        "E0",
        "lo",
        "hi",
        "blocks",
        "mean_abs_diff",
        "mean_abs_diff_stderr",
        "mean_diff",
        "mean_diff_stderr",
        "match_rate",
        "match_rate_stderr",
    ]);
    let mut points = Vec::new();
    // (alpha, beta, E0, lo, hi) -> (N, E|xi - zeta|)
    let mut families: BTreeMap<[u64; 5], Vec<(usize, f64)>> = BTreeMap::new();
    for p in grid {
        let params = cfg.matrix_params(p)?;
        let w = cfg.rescale_window(p)?;
        let scheme = make_block_scheme(&cfg.block_config(p)?)?;
        let records = runner.trials(p.index, cfg.trials(), |seed| {
            let m = seeded(&params, seed)?;
            match mode {
                BlockMode::Coupled => {
                    let (xi, bc) = coupled_counts(&m, &scheme, &w)?;
                    Ok((xi, bc.zeta))
                }
                BlockMode::Independent => {
                    let xi = if w.is_empty() {
                        0
                    } else {
                        let (a, b) = w.physical(p.n_half)?;
                        BandCounter::new(m.band()).count_in(a, b)?.count as u64
                    };
                    let bc = sample_block_counts(&params.clone().with_seed(seed), &scheme, &w)?;
                    Ok((xi, bc.zeta))
                }
            }
        })?;
        let beta = p.beta.unwrap_or(f64::NAN);
        let trials: Vec<CoupledTrial> = records
            .iter()
            .map(|r| CoupledTrial {
                trial: r.trial,
                seed: r.seed,
                xi: r.value.0,
                zeta: r.value.1,
            })
            .collect();
        for t in &trials {
            raw.push(vec![
                num(p.index),
                num(t.trial),
                num(t.seed),
                num(p.n_half),
                num(p.alpha),
                num(beta),
                mode.name().to_string(),
                num(t.xi),
                num(t.zeta),
            ]);
        }
        let report = CouplingReport::from_trials(&scheme, p.alpha, &trials);
        trend.push(vec![
            num(p.n_half),
            num(p.alpha),
            num(beta),
            mode.name().to_string(),
            num(w.e0),
            num(w.lo),
            num(w.hi),
            num(scheme.block_count()),
            num(report.mean_abs_diff),
            num(report.mean_abs_diff_stderr),
            num(report.mean_diff),
            num(report.mean_diff_stderr),
            num(report.match_rate),
            num(report.match_rate_stderr),
        ]);
        families
            .entry([
                p.alpha.to_bits(),
                beta.to_bits(),
                w.e0.to_bits(),
                w.lo.to_bits(),
                w.hi.to_bits(),
            ])
            .or_default()
            .push((p.n_half, report.mean_abs_diff));
        points.push(json!({
            "point": point_json(p),
            "mode": mode.name(),
            "blocks": scheme.block_count(),
            "block_sites": scheme.full_block_len(),
            "interior_gap": scheme.interior_gap,
            "scale_order_ok": scheme.scale_order_ok,
            "report": report,
        }));
    }
    let trends: Vec<Value> = families
        .into_iter()
        .map(|(key, mut rows)| {
            rows.sort_by_key(|r| r.0);
            let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
            json!({
                "alpha": f64::from_bits(key[0]),
                "beta": f64::from_bits(key[1]),
                "E0": f64::from_bits(key[2]),
                "I": [f64::from_bits(key[3]), f64::from_bits(key[4])],
                "N": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "mean_abs_diff": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "strictly_decreasing": decreasing,
            })
        })
        .collect();
    Ok(KindResult {
        tables: vec![("block_trials".into(), raw), ("block_trend".into(), trend)],
        summary: json!({ "kind": "block-compare", "mode": mode.name(), "points": points, "trends": trends }),
    })
}

fn run_localization(cfg: &ExperimentConfig, grid: &[GridPoint], runner: &Runner) -> Result<KindResult> {
    let mut raw = Table::new(&["point", "trial", "seed", "d", "moment_sample"]);
    let mut decay = Table::new(&["alpha", "N", "s", "epsilon", "d", "log_moment", "stderr"]);
    let mut points = Vec::new();
    // (alpha, s, epsilon setting) -> (N, loc_length)
    let mut families: BTreeMap<DecayKey, Vec<(usize, f64)>> = BTreeMap::new();
    for p in grid {
        let params = cfg.matrix_params(p)?;
        let opts = cfg.decay_options(p);
        let records = runner.trials(p.index, cfg.trials(), |seed| {
            decay_trial(&params.clone().with_seed(seed), &opts)
        })?;
        for r in &records {
            for (k, &d) in opts.distances.iter().enumerate() {
                raw.push(vec![
                    num(p.index),
                    num(r.trial),
                    num(r.seed),
                    num(d),
                    num(r.value[k]),
                ]);
            }
        }
        let samples: Vec<Vec<f64>> = records.into_iter().map(|r| r.value).collect();
        let fit = fit_decay(&params, &opts, &samples)?;
        for (k, &d) in fit.distances.iter().enumerate() {
            decay.push(vec![
                num(p.alpha),
                num(p.n_half),
                num(fit.s),
                num(fit.epsilon),
                num(d),
                num(fit.log_moments[k]),
                num(fit.log_stderr[k]),
            ]);
        }
        let kappa = if fit.status == DecayStatus::Ok {
            kappa_ratio(fit.loc_length, p.n_half).ok()
        } else {
            None
        };
        families
            .entry((p.alpha.to_bits(), fit.s.to_bits(), p.epsilon.map(f64::to_bits)))
            .or_default()
            .push((p.n_half, fit.loc_length));
        points.push(json!({
            "point": point_json(p),
            "epsilon": fit.epsilon,
            "rate": fit.rate,
            "rate_stderr": fit.rate_stderr,
            "loc_length": fit.loc_length,
            "kappa": kappa,
            "intercept": fit.intercept,
            "prefactor_exponent": fit.prefactor_exponent,
            "r_squared": fit.r_squared,
            "tail_start": fit.tail_start,
            "tail_points": fit.tail_points,
            "status": fit.status,
        }));
    }
    let scaling: Vec<Value> = families
        .into_iter()
        .map(|((alpha, s, _), rows)| {
            let alpha = f64::from_bits(alpha);
            let fit = localization_scaling(&rows);
            let mu_hat = fit.map(|f| if alpha > 0.0 { f.slope / alpha } else { f64::NAN });
            json!({
                "alpha": alpha,
                "s": f64::from_bits(s),
                "N": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "loc_length": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "fit": fit,
                "mu_hat": mu_hat,
            })
        })
        .collect();
    Ok(KindResult {
        tables: vec![("decay_trials".into(), raw), ("decay".into(), decay)],
        summary: json!({ "kind": "localization", "points": points, "scaling": scaling }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectralstats::Unfolding;

    #[test]
    fn reference_scales_with_unfolding() {
        let w = RescaleWindow::new(0.0, 0.0, 1.0).unwrap();
        let r = pointwise_reference(&w, 100);
        assert!((r - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        let h = pointwise_reference(&w.with_unfolding(Unfolding::HalfSize), 100);
        assert!((h - 201.0 / 100.0 / std::f64::consts::PI).abs() < 1e-12);
    }
}
