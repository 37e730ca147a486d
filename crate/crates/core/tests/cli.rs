use std::fs;
use std::path::Path;
use std::process::Command;

use cfunhddc::cli::{ingest_csv, normalize_time, run, write_csv, DataSource, RunConfig};
use cfunhddc::funbasis::{Curve, CurveSet, Domain, Observations};
use cfunhddc::init::InitConfig;
use cfunhddc::simulate::{simulate, DatasetKind, SimSpec};
use cfunhddc::Error;
use serde_json::Value;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn small_spec(seed: u64) -> SimSpec {
    let mut spec = SimSpec::new(DatasetKind::Dataset1, seed);
    spec.per_class = 40;
    spec
}

fn small_run(out: &Path) -> RunConfig {
    let mut config = RunConfig::new(DataSource::Simulate(small_spec(3)), out.to_path_buf());
    config.basis_size = 12;
    config.init = InitConfig {
        nb_init: 2,
        seed: 3,
        ..InitConfig::default()
    };
    config
}

fn validate_report(path: &Path) {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let report: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&report)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn ingests_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let body = "curve_id,component,time,value\n\
                a,1,0,1.0\na,1,1,2.0\na,1,2,3.0\na,2,0,-1\na,2,1,-2\na,2,2,-3\n\
                b,2,0.5,5\nb,1,0.5,4\nb,1,1.5,4.5\nb,2,1.5,5.5\nb,1,1,4.2\nb,2,1,5.2\n";
    let curves = ingest_csv(&write(dir.path(), "c.csv", body)).unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves.n_components(), 2);
    assert_eq!(curves.domain(), Domain::new(0.0, 2.0).unwrap());
    let b = &curves.curves()[1];
    assert_eq!(b.id, "b");
    assert_eq!(b.components[0].times.len(), 3);
    assert_eq!(b.components[1].values.len(), 3);
    assert_eq!(
        curves.curves()[0].components[1].values,
        vec![-1.0, -2.0, -3.0]
    );
}

#[test]
fn missing_component_names_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let body = "curve_id,component,time,value\na,1,0,1\na,2,0,1\nlonely,1,0,2\n";
    let err = ingest_csv(&write(dir.path(), "c.csv", body)).unwrap_err();
    assert!(err.to_string().contains("lonely"), "{err}");
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = "curve_id,component,time,value\na,1,0,1\na,1,oops,1\n";
    match ingest_csv(&write(dir.path(), "c.csv", body)).unwrap_err() {
        Error::Ingest { row, .. } => assert_eq!(row, Some(3)),
        other => panic!("unexpected {other}"),
    }
    let body = "curve,component,time,value\na,1,0,1\n";
    match ingest_csv(&write(dir.path(), "d.csv", body)).unwrap_err() {
        Error::Ingest { row, reason } => {
            assert_eq!(row, Some(1));
            assert!(reason.contains("curve_id"));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&small_spec(11)).unwrap();
    let path = dir.path().join("sim.csv");
    write_csv(&data.curves, &path).unwrap();
    assert_eq!(ingest_csv(&path).unwrap(), data.curves);
}

#[test]
fn time_normalization_per_curve() {
    let obs = |t: Vec<f64>| Observations::new(t.clone(), vec![0.0; t.len()]);
    let curves = CurveSet::new(
        vec![
            Curve {
                id: "x".into(),
                components: vec![obs(vec![2.0, 4.0, 6.0])],
            },
            Curve {
                id: "y".into(),
                components: vec![obs(vec![0.1, 0.2, 0.7])],
            },
        ],
        Domain::new(0.0, 6.0).unwrap(),
    )
    .unwrap();
    let out = normalize_time(&curves).unwrap();
    assert_eq!(out.domain(), Domain::unit());
    assert_eq!(out.curves()[0].components[0].times, vec![0.0, 0.5, 1.0]);
    let y = &out.curves()[1].components[0].times;
    assert_eq!((y[0], y[2]), (0.0, 1.0));

    let flat = CurveSet::new(
        vec![Curve {
            id: "flat".into(),
            components: vec![obs(vec![3.0, 3.0])],
        }],
        Domain::new(0.0, 6.0).unwrap(),
    )
    .unwrap();
    assert!(normalize_time(&flat)
        .unwrap_err()
        .to_string()
        .contains("flat"));
}

#[test]
fn run_is_deterministic_and_schema_valid() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let report = run(&small_run(a.path())).unwrap();
    run(&small_run(b.path())).unwrap();
    for name in ["report.json", "assignments.csv", "plotdata.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
    assert!(a.path().join("timing.json").exists());
    validate_report(&a.path().join("report.json"));

    assert_eq!(report.n_curves, 165);
    assert_eq!(report.clusters.len(), 4);
    let sizes: usize = report.clusters.iter().map(|c| c.size).sum();
    assert_eq!(sizes, 165);
    let assignments = fs::read_to_string(a.path().join("assignments.csv")).unwrap();
    assert_eq!(assignments.lines().count(), 166);
    assert!(assignments.starts_with("curve_id,cluster,outlier,t_max,s\n"));
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a directory where a file should go makes the third write fail
    fs::create_dir(dir.path().join("plotdata.csv")).unwrap();
    assert!(run(&small_run(dir.path())).is_err());
    assert!(!dir.path().join("report.json").exists());
    assert!(!dir.path().join("assignments.csv").exists());
    assert!(!dir.path().join("timing.json").exists());
}

#[test]
fn binary_runs_and_reports_structured_errors() {
    let exe = env!("CARGO_BIN_EXE_cfunhddc");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let output = Command::new(exe)
        .args([
            "simulate",
            "--kind",
            "dataset2",
            "--per-class",
            "30",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(output.status.success());

    let out = dir.path().join("out");
    let output = Command::new(exe)
        .args([
            "run",
            "--K-range",
            "3:4",
            "--d-grid",
            "2:3",
            "--basis",
            "10",
            "--nb-init",
            "2",
            "--input",
        ])
        .arg(&csv)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    validate_report(&out.join("report.json"));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["selection"]["cells"].as_array().unwrap().len(), 4);
    assert!(report["evaluation"].is_null());

    let output = Command::new(exe)
        .args(["run", "--input", "/definitely/not/here.csv", "--out"])
        .arg(dir.path().join("never"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err: Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"]["module"], "cli");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("not/here.csv"));
}
