mod common;

use std::fs;

use bansim_core::channel::Posture;
use bansim_core::experiment::{run_experiment, ExperimentSpec, RUNS_HEADER};
use bansim_core::strategies::StrategyKind;
use common::FIXTURE;

fn small_spec(out: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::full_grid(FIXTURE, out);
    spec.postures = vec![Posture::Walk, Posture::Sit];
    spec.strategies = vec![StrategyKind::Plain, StrategyKind::Clpb];
    spec.rates = vec![1.0, 20.0];
    spec.buffers = vec![100];
    spec.seeds = 3;
    spec
}

#[test]
fn writes_three_files_with_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.files.len(), 3);
    assert_eq!(out.rows.len(), spec.grid_size());
    assert_eq!(out.aggregates.len(), spec.grid_size() / 3);

    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(lines.next().unwrap(), RUNS_HEADER.join(","));
    assert_eq!(lines.count(), spec.grid_size());

    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert!(agg.lines().next().unwrap().contains("coverage_pct_mean"));
    assert_eq!(agg.lines().count(), 1 + spec.grid_size() / 3);
    assert!(dir.path().join("nodes.csv").exists());
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().path().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn rerun_is_byte_identical_and_independent_of_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut spec_a = small_spec(a.path());
    spec_a.jobs = Some(1);
    let mut spec_b = small_spec(b.path());
    spec_b.jobs = Some(3);
    run_experiment(&spec_a).unwrap();
    run_experiment(&spec_b).unwrap();
    for f in ["runs.csv", "aggregate.csv", "nodes.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_experiment_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let mut spec = small_spec(&out);
    spec.buffers = vec![0];
    assert!(run_experiment(&spec).is_err());
    let mut spec = small_spec(&out);
    spec.table = dir.path().join("missing.tbl");
    assert!(run_experiment(&spec).is_err());
    assert!(!out.exists());
}
