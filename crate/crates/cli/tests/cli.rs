use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spencer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spencer"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPENCER_THREADS")
        .output()
        .expect("spawn spencer")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dims(report: &Value) -> Vec<u64> {
    report["dimensions"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect()
}

#[test]
fn torus_fluid_run_writes_report_and_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(dir.path(), &["run", "--scenario", "torus-fluid", "-o", "out"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("dimensions (1, 2, 1)"));
    let r = report(&dir.path().join("out/report.json"));
    assert_eq!(dims(&r), vec![1, 2, 1]);
    assert_eq!(r["betti_reference"], serde_json::json!([1, 2, 1]));
    assert!(r["fit"].is_null());

    let csv = std::fs::read_to_string(dir.path().join("out/spectra.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("degree,index,eigenvalue"));
    // Dense solves report the full spectrum: 256 + 512 + 256 rows.
    assert_eq!(lines.count(), 1024);
}

#[test]
fn su2_flat_regression_table() {
    // Rank–nullity on the 8×8 grid: J = 1 contributes only de Rham ⊗ Sym¹,
    // since the truncation kills Δ_1; the table is (1, 1+4, 3+4, 3) → (1, 5, 7, 3).
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(dir.path(), &["run", "--scenario", "su2-flat", "-o", "."]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(dims(&report(&dir.path().join("report.json"))), vec![1, 5, 7, 3]);
}

#[test]
fn runs_are_deterministic_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = spencer(dir.path(), &["run", "--scenario", "fit-demo", "--set", "mesh.resolution=[6,6]", "-o", sub]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let strip = |p: &str| {
        let text = std::fs::read_to_string(dir.path().join(p)).unwrap();
        text.lines().filter(|l| !l.contains("generated_at_unix")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip("a/report.json"), strip("b/report.json"));
    assert_eq!(strip("a/spectra.csv"), strip("b/spectra.csv"));
}

#[test]
fn report_keys_are_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    spencer(dir.path(), &["run", "--scenario", "torus-fluid", "--set", "mesh.resolution=[4,4]", "-o", "a"]);
    spencer(dir.path(), &["run", "--scenario", "fit-demo", "--set", "mesh.resolution=[4,4]", "-o", "b"]);
    let keys = |p: &str| {
        let mut k: Vec<String> = report(&dir.path().join(p)).as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    assert_eq!(keys("a/report.json"), keys("b/report.json"));
    assert!(report(&dir.path().join("b/report.json"))["fit"].is_object());
}

#[test]
fn zero_lambda_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["validate", "run"] {
        let out = spencer(dir.path(), &[cmd, "--set", "lambda.kind=zero"]);
        assert_eq!(code(&out), 2);
        assert!(stderr(&out).contains("constraint covector vanishes"));
    }
}

#[test]
fn incompatible_pair_validates_with_warning() {
    // λ = e3*, ω₁ = e1: ad*_{e1} e3* = e2* ≠ 0, so dλ + ad*_ω λ ≠ 0.
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(
        dir.path(),
        &["validate", "--set", "omega.kind=constant", "--set", "omega.components=[[1,0,0],[0,0,0]]"],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("warning"));
    assert!(stderr(&out).contains("not a compatible pair"));
}

#[test]
fn equal_weights_give_unit_ratios() {
    // so(3): ‖2e3*‖² = 2 so w = 3; ω = e1 dx + e2 dy has Ω = e3 with ‖e3‖² = 2,
    // so κ = 3 as well.
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(
        dir.path(),
        &[
            "compare-metrics",
            "--set",
            "lambda.coeffs=[0,0,2]",
            "--set",
            "omega.kind=constant-curvature",
            "--set",
            "mesh.resolution=[6,6]",
            "-o",
            ".",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cmp = report(&dir.path().join("comparison.json"));
    let eq = &cmp["metric_equivalence"];
    for key in ["inf_w", "sup_w", "inf_kappa", "sup_kappa"] {
        assert!((eq[key].as_f64().unwrap() - 3.0).abs() < 1e-12, "{key}");
    }
    assert!((eq["c1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((cmp["sandwich"]["max_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for curve in cmp["ratio_curves"].as_array().unwrap() {
        for r in curve["ratios"].as_array().unwrap() {
            assert!((r.as_f64().unwrap() - 1.0).abs() < 1e-8);
        }
    }
    assert_eq!(cmp["dimensions_identical"], Value::Bool(true));
}

#[test]
fn convergence_needs_three_resolutions() {
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(dir.path(), &["convergence", "-r", "8,16"]);
    assert_eq!(code(&out), 1);
    let out = spencer(dir.path(), &["convergence", "-r", "8,16,32", "-o", "."]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = report(&dir.path().join("convergence.json"));
    assert_eq!(table["dimensions_stable"], Value::Bool(true));
    assert!(table["min_order"].as_f64().unwrap() > 1.9);
}

#[test]
fn decompose_round_trip_and_shape_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(dir.path(), &["decompose", "--scenario", "torus-fluid", "--set", "mesh.resolution=[5,5]", "-d", "1", "-o", "a"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = report(&dir.path().join("a/decomposition.json"));
    assert!(summary["residuals"]["reconstruction"].as_f64().unwrap() < 1e-8);

    // The exact part decomposes into itself.
    let out = spencer(
        dir.path(),
        &["decompose", "--set", "mesh.resolution=[5,5]", "-d", "1", "-i", "a/exact.csv", "--format", "bin", "-o", "b"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let norms = report(&dir.path().join("b/decomposition.json"))["norms"].clone();
    let n: Vec<f64> = norms.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((n[2] - n[0]).abs() < 1e-10 * n[0] && n[1] < 1e-10 * n[0] && n[3] < 1e-10 * n[0]);
    assert!(dir.path().join("b/exact.bin").exists() && dir.path().join("b/exact.json").exists());

    let out = spencer(dir.path(), &["decompose", "--set", "mesh.resolution=[5,5]", "-d", "0", "-i", "a/exact.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("degree 0 expects 25"));
}

#[test]
fn pipeline_failures_exit_three_with_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(
        dir.path(),
        &["run", "--scenario", "su2-flat", "--set", "eigen.dense_limit=1", "--set", "eigen.max_iterations=1"],
    );
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("step 3"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spencer(dir.path(), &["run", "--scenario", "nope"])), 1);
    assert_eq!(code(&spencer(dir.path(), &["run", "--set", "mesh.nope=1"])), 1);
    assert_eq!(code(&spencer(dir.path(), &["frobnicate"])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_spencer"))
        .arg("list-scenarios")
        .env("SPENCER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn harmonics_and_plots_are_emitted() {
    let dir = tempfile::tempdir().unwrap();
    let out = spencer(
        dir.path(),
        &["run", "--set", "mesh.resolution=[4,4]", "--dump-harmonics", "--plots", "-o", "."],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let header = report(&dir.path().join("harmonics_1.json"));
    assert_eq!(header["shape"], serde_json::json!([32, 2]));
    assert_eq!(std::fs::metadata(dir.path().join("harmonics_1.bin")).unwrap().len(), 32 * 2 * 8);
    assert!(dir.path().join("spectrum.png").exists() && dir.path().join("weights.png").exists());
}

#[test]
fn thread_cap_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spencer"))
        .args(["run", "--set", "mesh.resolution=[4,4]", "-o", "."])
        .current_dir(dir.path())
        .env("SPENCER_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}
