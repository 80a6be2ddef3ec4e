use std::fs;
use std::path::Path;

use spinsync::scenario::{
    preset, run_scenario, run_thermal_sweep, RunConfig, ScenarioError, SWEEP_HEADER,
    TRAJECTORY_HEADER,
};

fn config_in(dir: &Path, horizon: f64) -> RunConfig {
    RunConfig {
        horizon,
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn manifest_value(dir: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

#[test]
fn empty_horizon_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run_scenario(&config_in(dir.path(), 0.0)).unwrap();
    assert!(sim.succeeded());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv, format!("{TRAJECTORY_HEADER}\n"));
    assert_eq!(manifest_value(dir.path(), "status").as_deref(), Some("ok"));
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&config_in(dir.path(), 3.0)).unwrap();
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 31);
    let mut last_t = f64::NEG_INFINITY;
    for row in &rows {
        assert_eq!(row.len(), 18);
        let t: f64 = row[0].parse().unwrap();
        assert!(t > last_t);
        last_t = t;
        for v in &row[..17] {
            assert!(v.parse::<f64>().is_ok(), "{v}");
        }
        assert!(row[17] == "perfect" || row[17].parse::<f64>().is_ok());
    }
    assert_eq!(rows[0][17], "perfect");
    assert_eq!(rows[0][15].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = RunConfig {
        horizon: 20.0,
        ..preset("fig2g").unwrap()
    };
    for dir in [&a, &b] {
        run_scenario(&RunConfig {
            out_dir: dir.path().to_path_buf(),
            ..base.clone()
        })
        .unwrap();
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn failure_keeps_partial_data_and_records_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        horizon: 40.0,
        out_dir: dir.path().to_path_buf(),
        ..preset("fig2a").unwrap()
    };
    let sim = run_scenario(&config).unwrap();
    let failure = sim
        .failure
        .expect("fig2a loses positivity during the transient at dt = 0.01");
    let t_fail = failure.time().unwrap();
    assert_eq!(
        manifest_value(dir.path(), "status").as_deref(),
        Some("failed")
    );
    let recorded: f64 = manifest_value(dir.path(), "failure_t")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(recorded, t_fail);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, sim.records.len());
    assert!(rows > 1);
    let last_t: f64 = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last_t, t_fail);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("Sq_bar = nan"));
}

#[test]
fn manifest_holds_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        scenario: "check".into(),
        ..config_in(dir.path(), 1.0)
    };
    run_scenario(&config).unwrap();
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let run_section = manifest.find("# run").unwrap();
    let back = RunConfig::from_toml_str(&manifest[..run_section], &RunConfig::default()).unwrap();
    assert_eq!(back, config);
    assert!(manifest_value(dir.path(), "version").is_some());
    assert!(manifest_value(dir.path(), "wall_time_s").is_some());
}

#[test]
fn config_file_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "lambda = 0.2\nn1 = 7\nf_mode = \"neglect\"\n").unwrap();
    let c = RunConfig::load(&path, &RunConfig::default()).unwrap();
    assert_eq!(c.params.lambda, 0.2);
    assert_eq!(c.params.n1, 7);
    assert_eq!(c.params.g2, 2.4);

    fs::write(&path, "lambda = 0.2\nspins = 7\n").unwrap();
    assert!(RunConfig::load(&path, &RunConfig::default()).is_err());
}

#[test]
fn invalid_parameters_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_in(dir.path(), 1.0);
    config.params.n1 = 0;
    match run_scenario(&config) {
        Err(ScenarioError::Config(v)) => assert!(v[0].contains("N1 must be >= 1"), "{v:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sweep_rows_match_standalone_runs() {
    let base = RunConfig {
        horizon: 8.0,
        ..preset("fig2g").unwrap()
    };
    let out = tempfile::tempdir().unwrap();
    let nm = [0.0, 1.0, 0.5, 1.0];
    let points = run_thermal_sweep(&base, &nm, out.path()).unwrap();
    assert_eq!(points.len(), 4);
    for (p, v) in points.iter().zip(nm) {
        assert_eq!(p.n_m, v);
    }
    assert_eq!(points[1].sq_bar.to_bits(), points[3].sq_bar.to_bits());

    for p in &points {
        let dir = tempfile::tempdir().unwrap();
        let mut single = base.clone();
        single.params.n_m = p.n_m;
        single.out_dir = dir.path().to_path_buf();
        let sim = run_scenario(&single).unwrap();
        assert!(sim.succeeded());
        assert_eq!(sim.summary.sq_bar.to_bits(), p.sq_bar.to_bits());
    }

    let csv = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first, vec![0.0, points[0].sq_bar]);
}

#[test]
fn failed_sweep_points_become_nan_rows() {
    let base = RunConfig {
        horizon: 30.0,
        ..preset("fig2a").unwrap()
    };
    let out = tempfile::tempdir().unwrap();
    let points = run_thermal_sweep(&base, &[0.0], out.path()).unwrap();
    assert!(points[0].sq_bar.is_nan());
    assert!(points[0].failure.is_some());
    let csv = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0.0000000000000000e0,nan"));
    let manifest = fs::read_to_string(out.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("failed_points = 1"));
    assert!(manifest.contains("note_1 = n_m="));
}
