use std::fs;

use intracavity::app::checks::Status;
use intracavity::app::{dynamic_checks, run, sweep, verify_bundle, LoadedBundle, Scenario, SweepResults};
use intracavity::Error;

const COMPENSATION: &str = "trap_optics.compensation.power_W";

fn quick() -> Scenario {
    let mut s = Scenario::bundled("fig3_sweep").unwrap();
    s.sweep = None;
    s.dynamics.scale_ratio = 2e-5;
    s.dynamics.duration_ms = 40.0;
    s.dynamics.hold_ms = 10.0;
    s.lightshift.sample_count = 300.0;
    s
}

#[test]
fn identical_runs_give_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&quick(), &dir.path().join("a")).unwrap();
    let b = run(&quick(), &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(verify_bundle(&dir.path().join("a")).unwrap(), a);
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path()).unwrap();
    let trace = dir.path().join("trace.csv");
    let mut text = fs::read_to_string(&trace).unwrap();
    text.push('\n');
    fs::write(&trace, text).unwrap();
    assert!(matches!(verify_bundle(dir.path()), Err(Error::ChecksumMismatch { .. })));
    fs::remove_file(&trace).unwrap();
    assert!(matches!(verify_bundle(dir.path()), Err(Error::MissingArtifact(_))));
}

#[test]
fn zero_length_run_has_an_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = quick();
    s.dynamics.duration_ms = 0.0;
    s.dynamics.hold_ms = 0.0;
    run(&s, dir.path()).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 1);
    let bundle = LoadedBundle::open(dir.path()).unwrap();
    assert!(dynamic_checks(&bundle)
        .unwrap()
        .iter()
        .all(|c| c.status == Status::Skipped));
}

#[test]
fn empty_sweep_writes_only_a_header() {
    let dir = tempfile::tempdir().unwrap();
    sweep(&quick(), COMPENSATION, &[], dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with(COMPENSATION));
}

#[test]
fn sweep_rows_match_standalone_runs() {
    let dir = tempfile::tempdir().unwrap();
    let base = quick();
    let values = [2.8, 5.2];
    sweep(&base, COMPENSATION, &values, &dir.path().join("sweep")).unwrap();
    let results: SweepResults =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep/results.json")).unwrap()).unwrap();
    for (i, v) in values.iter().enumerate() {
        let point = base.sweep_point(COMPENSATION, *v).unwrap();
        let single = dir.path().join(format!("single_{i}"));
        run(&point, &single).unwrap();
        let swept = fs::read(dir.path().join(format!("sweep/point_{i}_trace.csv"))).unwrap();
        assert_eq!(swept, fs::read(single.join("trace.csv")).unwrap());
        assert_eq!(results.rows[i].seed, point.scenario.seed);
    }
}

#[test]
fn rejected_sweep_parameter_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    match sweep(&quick(), "dynamics.no_such_ms", &[1.0], dir.path()) {
        Err(Error::UnknownParameter(key)) => assert!(key.contains("no_such_ms")),
        other => panic!("{other:?}"),
    }
}
