use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sscopic")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn validator(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn assert_valid(schema: &str, doc: &Value) {
    let v = validator(schema);
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("`{key}` is not a number in {v}"))
}

#[test]
fn tmss_epr_product_is_violated() {
    let r = ok_json(&["criterion", "--state", "tmss:r=0.8", "--id", "epr_product_cv"]);
    assert_valid("criterion_report.v1.json", &r);
    assert_eq!(r["violated"], true);
    assert!((f(&r, "ratio") - 0.1505).abs() < 1e-3);
    assert_eq!(r["metadata"]["state"], "tmss:r=0.8");
}

#[test]
fn vacuum_saturates_inference_bound() {
    let r = ok_json(&["criterion", "--state", "vacuum", "--id", "theorem1_cv"]);
    assert_valid("criterion_report.v1.json", &r);
    assert!((f(&r, "lhs") - 1.0).abs() < 1e-9);
    assert!((f(&r, "rhs") - 1.0).abs() < 1e-9);
    assert_eq!(r["violated"], false);
}

#[test]
fn squeezed_size_is_two_over_dp() {
    let r = ok_json(&["criterion", "--state", "squeezed:r=0.5", "--id", "cv_sscopic"]);
    assert!((f(&r, "s_min") - 2.0 * 0.5f64.exp()).abs() < 1e-6);
}

#[test]
fn state_file_matches_inline_spec() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    fs::write(&path, r#"{"kind": "tmss", "r": 0.8}"#).unwrap();
    let from_file = run(&["criterion", "--state-file", path.to_str().unwrap(), "--id", "epr_product_cv"]);
    let inline = run(&["criterion", "--state", "tmss:r=0.8", "--id", "epr_product_cv"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, inline.stdout);
}

#[test]
fn sweep_ratio_decreases_with_squeezing() {
    let out = run(&[
        "sweep", "--state", "tmss:r=0", "--id", "epr_product_cv", "--param", "r", "--from", "0", "--to", "1.2",
        "--steps", "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("parameter,lhs,rhs,ratio,s_min,method,violated"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[1][0], "0.2");
    let ratios: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    assert!(rows.iter().all(|r| r[5] == "analytic"));
}

#[test]
fn sweep_squeezed_size_follows_closed_form() {
    let out = run(&[
        "sweep", "--state", "squeezed:r=0", "--id", "cv_sscopic", "--param", "r", "--from", "0", "--to", "1",
        "--steps", "5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let r: f64 = cols[0].parse().unwrap();
        let s_min: f64 = cols[4].parse().unwrap();
        assert!((s_min - 2.0 * r.exp()).abs() < 1e-4, "r = {r}: {s_min}");
    }
}

#[test]
fn single_step_sweep_equals_criterion() {
    let sweep = ok_json(&[
        "sweep", "--state", "tmss:r=0.3", "--id", "epr_product_cv", "--param", "r", "--from", "0.8", "--to",
        "0.8", "--steps", "1", "--format", "json",
    ]);
    let single = ok_json(&["criterion", "--state", "tmss:r=0.8", "--id", "epr_product_cv"]);
    assert_eq!(sweep.as_array().unwrap().len(), 1);
    assert_eq!(sweep[0], single);
}

#[test]
fn simulate_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        run(&[
            "simulate", "--state", "tmss:r=0.8,cutoff=40", "--id", "cv_sscopic_inferred", "--n", "200000",
            "--seed", "7", "--out-dir", out.to_str().unwrap(),
        ])
    };
    let first = args(&a);
    let second = args(&b);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    for name in ["record_0.txt", "report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_valid("criterion_report.v1.json", &report);
    assert_eq!(report["method"], "sampled");
    let ci = report["metadata"]["ci"].as_f64().unwrap();
    let analytic = 1.0 / 1.6f64.cosh();
    assert!((f(&report, "lhs") - analytic).abs() < 3.0 * ci, "{report}");
}

#[test]
fn simulate_with_too_few_samples_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--state", "tmss:r=0.8", "--id", "epr_product_cv", "--n", "10", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn truncation_failure_exits_two() {
    let out = run(&["criterion", "--state", "tmss:r=0.8,cutoff=5", "--id", "epr_product_cv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["criterion", "--id", "epr_product_cv"]).status.code(), Some(1));
    assert_eq!(run(&["criterion", "--state", "tmss:r=0.8", "--id", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&["criterion", "--state", "tmss:q=1", "--id", "epr_product_cv"]).status.code(), Some(1));
    assert_eq!(
        run(&["criterion", "--state-file", "/definitely/missing.json", "--id", "epr_product_cv"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["oracle", "--id", "support_min_p"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn support_oracle_passes() {
    let r = ok_json(&["oracle", "--id", "support_min_p", "--S", "4"]);
    assert_valid("oracle_report.v1.json", &r);
    assert!((f(&r, "value") - 2.4674).abs() / 2.4674 < 0.01);
    assert_eq!(f(&r, "bound"), 0.25);
    assert_eq!(r["pass"], true);
}

#[test]
fn theorem1_sweep_oracle_passes() {
    let r = ok_json(&["oracle", "--id", "theorem1_sweep", "--n", "500"]);
    assert_valid("oracle_report.v1.json", &r);
    assert!(f(&r, "value") >= -1e-8);
    assert_eq!(r["pass"], true);
}

#[test]
fn spin_window_oracle_passes() {
    let r = ok_json(&["oracle", "--id", "spin_window", "--j", "5", "--S", "3"]);
    assert_valid("oracle_report.v1.json", &r);
    assert!(f(&r, "value") >= -1e-6);
    assert_eq!(r["pass"], true);
}
