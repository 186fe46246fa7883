//! Monte Carlo checks against closed-form references.

mod common;

use common::{mean_se, n_sc, simpson};
use num_complex::Complex64 as C;
use rbmlab::blockdecomp::{
    coupling_compare, make_block_scheme, resolvent_error_terms, sample_block_counts, BlockConfig,
};
use rbmlab::eigensolver::BandCounter;
use rbmlab::ensemble::{BandMatrix, BandMatrixParams};
use rbmlab::localization::{
    fractional_moment_decay, kappa_ratio, localization_scaling, DecayOptions, DecayStatus, MomentEstimator,
};
use rbmlab::rng::derive_trial_seed;
use rbmlab::spectralstats::{intensity_bn, intensity_integrated, RescaleWindow, Unfolding};

#[test]
fn one_by_one_matrix_is_a_standard_gaussian() {
    let values: Vec<f64> = (0..20_000)
        .map(|s| {
            let p = BandMatrixParams::from_half_band(0, 0).unwrap().with_seed(s);
            let m = BandMatrix::sample(&p).unwrap();
            assert_eq!(m.dimension(), 1);
            m.entry(0, 0)
        })
        .collect();
    let (m, se) = mean_se(&values);
    let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    assert!(m.abs() < 3.0 * se);
    // variance of x^2 is 2 for a standard gaussian
    assert!(
        (var - 1.0).abs() < 3.0 * (2.0 / values.len() as f64).sqrt(),
        "variance {var}"
    );
}

#[test]
fn in_band_entries_have_variance_one_over_w() {
    let seeds = 10_000;
    let p = BandMatrixParams::from_exponent(100, 0.3).unwrap();
    assert_eq!(p.half_band, 3);
    let mut sum_sq: Vec<f64> = Vec::new();
    let mut sum_4th: Vec<f64> = Vec::new();
    for s in 0..seeds {
        let m = BandMatrix::sample(&p.clone().with_seed(s)).unwrap();
        let entries: Vec<f64> = m.band().stored_entries().map(|(_, _, v)| v).collect();
        if sum_sq.is_empty() {
            sum_sq = vec![0.0; entries.len()];
            sum_4th = vec![0.0; entries.len()];
        }
        for (k, v) in entries.iter().enumerate() {
            sum_sq[k] += v * v;
            sum_4th[k] += v.powi(4);
        }
    }
    let target = 1.0 / 7.0;
    let nf = seeds as f64;
    let mut z_max: f64 = 0.0;
    let mut outside_3 = 0;
    for (s2, s4) in sum_sq.iter().zip(&sum_4th) {
        let var = s2 / nf;
        let se = ((s4 / nf - var * var) / nf).sqrt();
        let z = (var - target).abs() / se;
        z_max = z_max.max(z);
        if z > 3.0 {
            outside_3 += 1;
        }
    }
    let entries = sum_sq.len();
    // each entry at 3 standard errors; a 0.27% two-sided excess rate is the
    // expected number of 3-sigma exceedances among independent entries
    assert!(
        (outside_3 as f64) <= 0.0027 * entries as f64 + 3.0 * (0.0027 * entries as f64).sqrt() + 1.0,
        "{outside_3} of {entries} entries beyond 3 standard errors"
    );
    assert!(z_max < 5.0, "largest deviation {z_max} standard errors");
    let pooled = sum_sq.iter().sum::<f64>() / (nf * entries as f64);
    let pooled_se = (2.0 * target * target / (nf * entries as f64)).sqrt();
    assert!(
        (pooled - target).abs() < 3.0 * pooled_se,
        "pooled variance {pooled}"
    );
}

#[test]
fn intensity_at_band_centre() {
    let p = BandMatrixParams::from_exponent(500, 0.3).unwrap().with_seed(21);
    let w = RescaleWindow::new(0.0, 0.0, 1.0).unwrap();
    let est = intensity_bn(&w, &p, 2000).unwrap();
    let target = n_sc(0.0);
    assert!(
        (est.b_n - target).abs() < 3.0 * est.stderr,
        "b_N {} +- {}",
        est.b_n,
        est.stderr
    );
}

#[test]
fn intensity_near_the_edge() {
    let p = BandMatrixParams::from_exponent(500, 0.3).unwrap().with_seed(22);
    let w = RescaleWindow::new(1.9, 0.0, 1.0).unwrap();
    let est = intensity_bn(&w, &p, 2000).unwrap();
    let target = n_sc(1.9);
    assert!((target - 0.0989).abs() < 1e-3);
    assert!(
        (est.b_n - target).abs() < 3.0 * est.stderr,
        "b_N {} +- {}",
        est.b_n,
        est.stderr
    );
}

#[test]
fn empty_window_has_zero_intensity() {
    let p = BandMatrixParams::from_exponent(50, 0.3).unwrap();
    let est = intensity_bn(&RescaleWindow::new(0.3, 0.5, 0.5).unwrap(), &p, 10).unwrap();
    assert_eq!(est.b_n, 0.0);
}

#[test]
fn integrated_intensity_matches_semicircle_mass() {
    let p = BandMatrixParams::from_exponent(500, 0.3).unwrap().with_seed(23);
    let centre = intensity_integrated((-0.5, 0.5), (0.0, 1.0), Unfolding::Dimension, &p, 16, 300).unwrap();
    let oracle = simpson(n_sc, -0.5, 0.5, 1000);
    let closed = 2.0 * (0.5 * 3.75f64.sqrt() / 4.0 + 0.25f64.asin()) / std::f64::consts::PI;
    assert!((oracle - closed).abs() < 1e-9);
    assert!(
        (centre.value - oracle).abs() < 0.1 * oracle,
        "{} vs {oracle}",
        centre.value
    );

    let whole = intensity_integrated((-2.0, 2.0), (0.0, 1.0), Unfolding::Dimension, &p, 32, 200).unwrap();
    assert!((whole.value - 1.0).abs() < 0.1, "total {}", whole.value);
}

#[test]
fn block_superposition_matches_mean_count() {
    let n_half = 1000;
    let scheme = make_block_scheme(&BlockConfig::new(n_half, 0.25, 0.7).with_delta(0.5)).unwrap();
    let w = RescaleWindow::new(0.0, 0.0, 1.0).unwrap();
    let (xi, zeta): (Vec<f64>, Vec<f64>) = (0..1000)
        .map(|t| {
            let p = BandMatrixParams::from_exponent(n_half, 0.25)
                .unwrap()
                .with_seed(derive_trial_seed(31, 0, t));
            let m = BandMatrix::sample(&p).unwrap();
            let (a, b) = w.physical(n_half).unwrap();
            let xi = BandCounter::new(m.band()).count_in(a, b).unwrap().count as f64;
            let zeta = sample_block_counts(&p, &scheme, &w).unwrap().zeta as f64;
            (xi, zeta)
        })
        .unzip();
    let (mx, sx) = mean_se(&xi);
    let (mz, sz) = mean_se(&zeta);
    assert!(
        (mx - mz).abs() < 3.0 * (sx * sx + sz * sz).sqrt(),
        "E xi {mx} +- {sx}, E zeta {mz} +- {sz}"
    );
}

#[test]
fn strongly_coupled_blocks_report() {
    // report only: the wide band leaves little room for an interior
    let cfg = BlockConfig::new(200, 0.45, 0.5).with_delta(0.5);
    match make_block_scheme(&cfg) {
        Ok(scheme) => {
            let p = BandMatrixParams::from_exponent(200, 0.45).unwrap().with_seed(3);
            let w = RescaleWindow::new(0.0, 0.0, 1.0).unwrap();
            let report = coupling_compare(&p, &scheme, &w, 200).unwrap();
            println!(
                "N=200 alpha=0.45 beta=0.5: E|xi - zeta| = {}",
                report.mean_abs_diff
            );
        }
        Err(e) => println!("N=200 alpha=0.45 beta=0.5: {e}"),
    }
}

fn mean_error_terms(n_half: usize, eps: f64, reps: u64) -> (f64, f64) {
    let scheme = make_block_scheme(&BlockConfig::new(n_half, 0.2, 0.7).with_delta(0.5)).unwrap();
    let z = C::new(0.0, eps);
    let (mut a, mut b) = (0.0, 0.0);
    for t in 0..reps {
        let p = BandMatrixParams::from_exponent(n_half, 0.2)
            .unwrap()
            .with_seed(derive_trial_seed(41, n_half as u64, t));
        let terms = resolvent_error_terms(&BandMatrix::sample(&p).unwrap(), &scheme, z).unwrap();
        assert!(terms.a_n >= 0.0 && terms.b_n >= 0.0);
        assert!(terms.trace_gap <= terms.a_n + terms.b_n + 1e-12);
        a += terms.a_n / reps as f64;
        b += terms.b_n / reps as f64;
    }
    (a, b)
}

#[test]
fn resolvent_diagnostics_shrink_with_n() {
    let grid = [250usize, 500, 1000, 2000];
    // at Im z = 1/N single realizations fluctuate at order one: report only
    for n_half in grid {
        let (a, b) = mean_error_terms(n_half, 1.0 / n_half as f64, 2);
        println!("N={n_half} Im z=1/N: A_N {a:.4e} B_N {b:.4e}");
    }
    let rows: Vec<(f64, f64)> = grid.iter().map(|&n| mean_error_terms(n, 0.05, 2)).collect();
    println!("Im z=0.05: {rows:?}");
    assert!(rows.windows(2).all(|w| w[1].0 < w[0].0), "A_N {rows:?}");
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1), "B_N {rows:?}");
}

fn decay(n_half: usize, alpha: f64, distances: Vec<usize>, seed: u64) -> rbmlab::localization::DecayFit {
    let p = BandMatrixParams::from_exponent(n_half, alpha)
        .unwrap()
        .with_seed(seed);
    let opts = DecayOptions {
        energy: 0.0,
        epsilon: None,
        s: 0.5,
        row: None,
        distances,
        trials: 1000,
        estimator: MomentEstimator::Mean,
    };
    fractional_moment_decay(&p, &opts).unwrap()
}

#[test]
fn localization_length_is_small_at_weak_coupling() {
    let fit = decay(1000, 0.2, (0..=30).map(|k| 10 * k).collect(), 51);
    assert_eq!(fit.status, DecayStatus::Ok);
    assert!(fit.rate > 0.0);
    let kappa = kappa_ratio(fit.loc_length, 1000).unwrap();
    assert!(kappa < 0.1, "kappa {kappa}");
}

#[test]
fn localization_scaling_report() {
    for alpha in [0.15, 0.2, 0.25, 0.3] {
        let mut points = Vec::new();
        for n_half in [500usize, 1000, 2000, 4000] {
            let w = 2 * rbmlab::ensemble::half_band_for(n_half, alpha) + 1;
            let dmax = (n_half - 1).min(40 * w * w / 9);
            let step = (dmax / 30).max(1);
            let distances: Vec<usize> = (0..=dmax / step).map(|k| k * step).collect();
            let fit = decay(n_half, alpha, distances, 61);
            println!(
                "alpha {alpha} N {n_half}: loc_length {:.1} r^2 {:.3} status {:?}",
                fit.loc_length, fit.r_squared, fit.status
            );
            if fit.status == DecayStatus::Ok {
                points.push((n_half, fit.loc_length));
            }
        }
        if let Some(line) = localization_scaling(&points) {
            assert!(line.slope.is_finite());
            println!(
                "alpha {alpha}: slope {:.3}, mu_hat {:.3}",
                line.slope,
                line.slope / alpha
            );
        }
    }
}
