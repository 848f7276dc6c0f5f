use std::fs;

use chemoflow::harness::{execute, mass_dir_name, read_series, sweep, ScenarioConfig, SERIES_FILE};

#[test]
fn small_mass_sweep_is_monotone_after_entry() {
    let base = ScenarioConfig {
        nx: 32,
        ny: 32,
        t_end: 10.0,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let r = sweep(&base, &[0.1, 0.05], Some(dir.path())).unwrap();
    assert_eq!(r.entries.iter().map(|e| e.mass).collect::<Vec<_>>(), vec![0.05, 0.1]);
    for e in &r.entries {
        assert!(e.completed && e.invariants_passed, "{e:?}");
        let f = e.f_monotone.unwrap();
        assert!(f.entry_t.is_some() && f.monotone, "mass {}: {f:?}", e.mass);
    }
    let series = read_series(&dir.path().join(mass_dir_name(0.05)).join(SERIES_FILE)).unwrap();
    assert_eq!(series.len(), 101);
    assert!(series.windows(2).all(|w| w[1].t > w[0].t));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 2);
}

#[test]
fn uniform_run_v_rate_tracks_mean_density() {
    let config = ScenarioConfig {
        nx: 32,
        ny: 32,
        preset: "uniform".into(),
        t_end: 5.0,
        ..Default::default()
    };
    let r = execute(&config, None).unwrap();
    assert!(r.passed(), "{:?}", r.summary.invariants);
    let n_bar = r.summary.meta.n_bar;
    let k = r.fit("sup_v_norm").unwrap().kappa_hat;
    assert!((k / n_bar - 1.0).abs() <= 0.2, "κ̂_v = {k}, n̄₀ = {n_bar}");
}

#[test]
fn written_series_reads_back_identically() {
    let config = ScenarioConfig {
        nx: 12,
        ny: 12,
        t_end: 0.5,
        sample_interval: 0.05,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let r = execute(&config, Some(dir.path())).unwrap();
    let back = read_series(&dir.path().join(SERIES_FILE)).unwrap();
    assert_eq!(back, r.records);
}
