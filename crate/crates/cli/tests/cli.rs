use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use diagfit::matrix::{write_matrix_market, CsrMatrix};
use diagfit::report::{parse_trajectory_csv, TRAJECTORY_HEADER};

fn diagfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diagfit"))
        .args(args)
        .env_remove("DIAGFIT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = diagfit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn poisson_svd_oracle_writes_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(&[
        "run",
        "--gen",
        "poisson2d:50",
        "--approx",
        "svd",
        "--model",
        "pchip",
        "--max-pts",
        "20",
        "--oracle",
        "--out",
        path(&out),
    ]);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(TRAJECTORY_HEADER));
    let rows = parse_trajectory_csv(&csv).unwrap();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0][0], Some(5.0));
    assert_eq!(rows[15][0], Some(20.0));
    assert!(rows.iter().all(|r| r[7].is_some()), "actual error column filled");
    let last = rows.last().unwrap()[7].unwrap();
    assert!(last <= 5e-2, "final relative error {last}");

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("chosen_followup = "));
    assert!(summary.contains("gen = poisson2d:50"));
    assert!(summary.contains("seed = 0"));
    assert!(fs::read_to_string(out.join("plots.gp"))
        .unwrap()
        .contains("trajectory.csv"));
}

#[test]
fn missing_matrix_file_fails() {
    let out = diagfit(&["run", "--matrix", "missing.mtx", "--out", "unused"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.mtx") && err.contains("No such file"), "{err}");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        run_ok(&[
            "run",
            "--gen",
            "poisson2d:30",
            "--approx",
            "svd",
            "--model",
            "pchip",
            "--seed",
            "7",
            "--out",
            path(&out),
        ]);
        csvs.push(fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_diagfit"))
        .args(["run", "--gen", "heatflow:10", "--ilu", "zero", "--max-pts", "8"])
        .env("DIAGFIT_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn matrix_market_input() {
    let dir = tempfile::tempdir().unwrap();
    let a = diagfit::matrix::gen_heatflow::<f64>(12, 0.25).unwrap();
    let file = dir.path().join("heat.mtx");
    write_matrix_market(&a, &file).unwrap();
    let out = dir.path().join("run");
    run_ok(&[
        "run",
        "--matrix",
        path(&file),
        "--ilu",
        "zero",
        "--max-pts",
        "10",
        "--oracle",
        "--out",
        path(&out),
    ]);
    let rows = parse_trajectory_csv(&fs::read_to_string(out.join("trajectory.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!diagfit(&["run", "--gen", "torus:5", "--out", "unused"])
        .status
        .success());
    assert!(!diagfit(&["run", "--gen", "poisson2d:10", "--matrix", "x.mtx"])
        .status
        .success());
    assert!(
        !diagfit(&["run", "--gen", "poisson2d:10", "--tol", "-1", "--out", "unused"])
            .status
            .success()
    );
    assert!(
        !diagfit(&["run", "--gen", "poisson2d:10", "--max-pts", "3", "--out", "unused"])
            .status
            .success()
    );
}

#[test]
fn compare_identity_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("eye.mtx");
    write_matrix_market(&CsrMatrix::<f64>::identity(40), &file).unwrap();
    let out = dir.path().join("cmp");
    run_ok(&["compare", "--matrix", path(&file), "--out", path(&out)]);
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("source,pchip_rel_err,hutch_ainv_rel_err,hutch_e_rel_err")
    );
    let mut rows = 0;
    for line in lines {
        rows += 1;
        for field in line.split(',').skip(1) {
            if field != "NA" {
                let v: f64 = field.parse().unwrap();
                assert!(v.abs() < 1e-12, "{line}");
            }
        }
    }
    assert_eq!(rows, 4);
}

#[test]
fn compare_heatflow_orders_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    run_ok(&["compare", "--gen", "heatflow:20:0.25", "--out", path(&out)]);
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let ilu0: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("ilu0,"))
        .unwrap()
        .split(',')
        .collect();
    let fit: f64 = ilu0[1].parse().unwrap();
    let hutch: f64 = ilu0[2].parse().unwrap();
    assert!(fit < hutch, "{fit} vs {hutch}");
}
