//! End-to-end CLI behavior: file round trips, exit codes, and output shapes.

use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frechetreg"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "cli {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate(dir: &Path) {
    ok(dir, &["simulate", "--n", "40", "--m", "25", "--p", "5", "--seed", "2", "--out-x", "x.csv", "--out-y", "y.csv"]);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cli(dir.path(), &["--help"]).status.success());
    assert!(cli(dir.path(), &["fit", "--help"]).status.success());
}

#[test]
fn simulate_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    ok(d, &["fit", "--x", "x.csv", "--y", "y.csv", "--lower", "0", "--out", "qhat.csv"]);
    let qhat = std::fs::read_to_string(d.join("qhat.csv")).unwrap();
    let rows: Vec<&str> = qhat.lines().collect();
    assert_eq!(rows.len(), 41); // header + 40 fitted rows
    assert_eq!(rows[0].split(',').count(), 25);
    // Lower support bound honored in the emitted values.
    for row in &rows[1..] {
        for cell in row.split(',') {
            assert!(cell.trim().parse::<f64>().unwrap() >= 0.0);
        }
    }
}

#[test]
fn decreasing_row_is_a_validation_error_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("x.csv"), "x1,x2\n0.1,0.2\n-0.3,0.4\n0.5,-0.6\n").unwrap();
    std::fs::write(d.join("y.csv"), "q1,q2,q3\n1,2,3\n1,2,3\n5,4,6\n").unwrap();
    let out = cli(d, &["fit", "--x", "x.csv", "--y", "y.csv", "--out", "qhat.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(2, 1)"), "stderr should name the violating (row, index): {err}");
}

#[test]
fn singular_design_exits_two_and_suggests_the_weighted_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Second column is an exact copy of the first.
    let mut x = String::from("x1,x2\n");
    let mut y = String::from("q1,q2\n");
    for i in 0..10 {
        let v = i as f64 / 10.0;
        x.push_str(&format!("{v},{v}\n"));
        y.push_str(&format!("{},{}\n", i, i + 1));
    }
    std::fs::write(d.join("x.csv"), x).unwrap();
    std::fs::write(d.join("y.csv"), y).unwrap();
    let out = cli(d, &["fit", "--x", "x.csv", "--y", "y.csv", "--out", "qhat.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("singular"), "stderr: {err}");
}

#[test]
fn malformed_csv_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("x.csv"), "x1,x2\n0.1,0.2\n0.3\n").unwrap();
    std::fs::write(d.join("y.csv"), "q1\n1\n2\n").unwrap();
    let out = cli(d, &["fit", "--x", "x.csv", "--y", "y.csv", "--out", "qhat.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn select_emits_simplex_lambda_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    ok(d, &["select", "--x", "x.csv", "--y", "y.csv", "--tau", "2.5", "--lower", "0", "--out", "sel.json"]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("sel.json")).unwrap()).unwrap();
    let lambda: Vec<f64> =
        v["lambda"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(lambda.len(), 5);
    assert!(lambda.iter().all(|&l| l >= 0.0));
    assert!((lambda.iter().sum::<f64>() - 2.5).abs() < 1e-9);
}

#[test]
fn path_emits_tidy_csv_over_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    ok(d, &["path", "--x", "x.csv", "--y", "y.csv", "--tau-grid", "0.5:10:0.5", "--lower", "0", "--out", "path.csv"]);
    let text = std::fs::read_to_string(d.join("path.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "variable,tau,lambda");
    let body: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(body.len(), 5 * 20); // p variables x 20 tau values
    let taus: std::collections::BTreeSet<String> =
        body.iter().map(|r| format!("{}", r[1])).collect();
    assert_eq!(taus.len(), 20);
    // Each tau's column sums to tau (1-based variable ids in column 0).
    for t in 1..=20 {
        let tau = 0.5 * t as f64;
        let sum: f64 = body.iter().filter(|r| r[1] == tau).map(|r| r[2]).sum();
        assert!((sum - tau).abs() < 1e-9, "tau {tau}: lambda sums to {sum}");
        let vars: Vec<f64> = body.iter().filter(|r| r[1] == tau).map(|r| r[0]).collect();
        assert_eq!(vars, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}

#[test]
fn cv_reports_tau_star_from_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    ok(d, &["cv", "--x", "x.csv", "--y", "y.csv", "--tau-grid", "1,2,4", "--lower", "0", "--folds", "4", "--seed", "5", "--out", "cv.json", "--out-csv", "cv.csv"]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("cv.json")).unwrap()).unwrap();
    let tau_star = v["tau_star"].as_f64().unwrap();
    assert!([1.0, 2.0, 4.0].contains(&tau_star));
    assert_eq!(v["cv_error"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(d.join("cv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4); // header + one row per tau
}

#[test]
fn bench_reports_requested_reps_and_positive_median() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    ok(d, &["bench", "--x", "x.csv", "--y", "y.csv", "--task", "fit", "--reps", "3", "--lower", "0", "--out", "bench.json"]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("bench.json")).unwrap()).unwrap();
    assert_eq!(v["reps"].as_u64().unwrap(), 3);
    assert_eq!(v["times"].as_array().unwrap().len(), 3);
    assert!(v["median"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--n", "15", "--m", "10", "--p", "4", "--seed", "9", "--out-x", "a_x.csv", "--out-y", "a_y.csv"]);
    ok(d, &["simulate", "--n", "15", "--m", "10", "--p", "4", "--seed", "9", "--out-x", "b_x.csv", "--out-y", "b_y.csv"]);
    ok(d, &["simulate", "--n", "15", "--m", "10", "--p", "4", "--seed", "10", "--out-x", "c_x.csv", "--out-y", "c_y.csv"]);
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("a_x.csv"), read("b_x.csv"));
    assert_eq!(read("a_y.csv"), read("b_y.csv"));
    assert_ne!(read("a_x.csv"), read("c_x.csv"));
}
