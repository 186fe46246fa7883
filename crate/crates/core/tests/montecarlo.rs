mod common;

use common::{config, run};
use rbmlab::montecarlo::{
    rerun_from_manifest, run_experiment, sha256_hex, ExperimentConfig, ExperimentKind, ExperimentManifest,
};
use rbmlab::Error;

#[test]
fn dos_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(ExperimentKind::Dos, &dir.path().join("a"), 5);
    cfg.n = vec![50];
    cfg.trials = Some(1);
    let first = run(&cfg);
    assert_eq!(
        first.files.iter().filter(|f| f.path.starts_with("raw/")).count(),
        1
    );
    let second = rerun_from_manifest(
        &dir.path().join("a/manifest.json"),
        Some(dir.path().join("b")),
        None,
    )
    .unwrap();
    for name in ["raw/dos.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    assert_eq!(first.files, second.files);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1usize, 8] {
        let mut cfg = config(ExperimentKind::Wegner, &dir.path().join(workers.to_string()), 77);
        cfg.n = vec![80, 120];
        cfg.widths = vec![1.0, 3.0];
        cfg.trials = Some(64);
        cfg.workers = Some(workers);
        run(&cfg);
        let base = dir.path().join(workers.to_string());
        outputs.push([
            std::fs::read(base.join("raw/counts.csv")).unwrap(),
            std::fs::read(base.join("raw/statistics.csv")).unwrap(),
            std::fs::read(base.join("summary.json")).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn manifest_round_trips_and_hashes_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(ExperimentKind::GapRatio, &dir.path().join("run"), 3);
    cfg.n = vec![60];
    cfg.trials = Some(5);
    let m = run(&cfg);
    let loaded = ExperimentManifest::load(&dir.path().join("run/manifest.json")).unwrap();
    assert_eq!(loaded, m);
    assert_eq!(loaded.master_seed, 3);
    assert!(loaded.seed_rule.contains("SplitMix64"));
    for f in &loaded.files {
        let bytes = std::fs::read(dir.path().join("run").join(&f.path)).unwrap();
        assert_eq!(f.sha256, sha256_hex(&bytes));
        assert_eq!(f.bytes, bytes.len() as u64);
    }
    // the echoed config is itself a valid config
    let echo = ExperimentConfig::load(&dir.path().join("run/manifest.json")).unwrap();
    assert_eq!(echo.seed, Some(3));
    assert_eq!(echo.kind, ExperimentKind::GapRatio);
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::Dos);
    cfg.n = vec![20];
    cfg.trials = Some(1);
    cfg.output = Some(dir.path().join("r"));
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.config.seed, Some(m.master_seed));
}

#[test]
fn invalid_grid_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = config(ExperimentKind::BlockCompare, &out, 1);
    cfg.alpha = vec![0.6];
    cfg.beta = vec![0.5];
    let e = run_experiment(&cfg).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
    assert!(!out.exists());
}

#[test]
fn unwritable_output_leaves_no_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    // a regular file where the raw/ directory must go
    let out = dir.path().join("run");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("raw"), b"in the way").unwrap();
    let mut cfg = config(ExperimentKind::Dos, &out, 1);
    cfg.n = vec![20];
    cfg.trials = Some(1);
    let e = run_experiment(&cfg).unwrap_err();
    assert!(matches!(e, Error::Io { .. }), "{e}");
    assert!(!out.join("summary.json").exists());
    assert!(!out.join("manifest.json").exists());
    assert_eq!(std::fs::read(out.join("raw")).unwrap(), b"in the way");
}

#[test]
fn environment_overrides_defaults() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Dos);
    cfg.workers = None;
    // SAFETY: this test binary sets the variable in a single test only
    unsafe {
        std::env::set_var(rbmlab::montecarlo::ENV_WORKERS, "3");
    }
    cfg.apply_env().unwrap();
    unsafe {
        std::env::remove_var(rbmlab::montecarlo::ENV_WORKERS);
    }
    assert_eq!(cfg.workers, Some(3));
}
