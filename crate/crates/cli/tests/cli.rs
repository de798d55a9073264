//! End-to-end runs of the `cvconv` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cvconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvconv"))
        .args(args)
        .output()
        .expect("spawn cvconv")
}

fn json(args: &[&str]) -> Value {
    let out = cvconv(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn forward_conserves_entanglement() {
    let r = json(&[
        "forward", "--lambda", "0.6", "--pairs", "4", "--cutoff", "512",
    ]);
    assert_eq!(r["pairs"].as_array().unwrap().len(), 4);
    assert_eq!(r["cutoff"], 512);
    assert!(f(&r["conservation_defect"]) < 1e-8);
    assert!(f(&r["max_factorization_defect"]) < 1e-10);
    let pairs = r["pair_entropy"].as_array().unwrap();
    let closed = r["pair_entropy_closed_form"].as_array().unwrap();
    for (a, b) in pairs.iter().zip(closed) {
        assert!((f(a) - f(b)).abs() < 1e-10);
    }
    assert_eq!(r["passed"], true);
}

#[test]
fn forward_from_vacuum_is_blank() {
    let r = json(&["forward", "--r", "0", "--pairs", "3"]);
    for e in r["pair_entropy"].as_array().unwrap() {
        assert_eq!(f(e), 0.0);
    }
    assert_eq!(f(&r["residual_entropy"]), 0.0);
}

#[test]
fn misaligned_cutoff_is_a_usage_error() {
    let out = cvconv(&[
        "forward", "--lambda", "0.5", "--pairs", "3", "--cutoff", "6",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple of 8"));
}

#[test]
fn squeezing_flags_are_exclusive() {
    let out = cvconv(&["forward", "--lambda", "0.5", "--r", "0.5", "--pairs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reverse_round_trip_from_forward_output() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.json");
    let out = cvconv(&[
        "forward",
        "--lambda",
        "0.5",
        "--pairs",
        "2",
        "--cutoff",
        "64",
        "--out",
        path_str(&pairs),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&["reverse", path_str(&pairs), "--roundtrip"]);
    assert!(f(&r["roundtrip"]["fidelity"]) >= 1.0 - 1e-10);
    assert!(f(&r["additivity"]["defect"]) < 1e-8);
    for w in r["leftover_excitation"].as_array().unwrap() {
        assert!(f(w) < 1e-12);
    }
    assert_eq!(r["passed"], true);
}

#[test]
fn reverse_blank_pairs_give_vacuum() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blank.json");
    let blank = "[[1,0],[0,0],[0,0],[0,0]]";
    std::fs::write(&input, format!("{{\"pairs\": [{blank}, {blank}]}}")).unwrap();
    let r = json(&["reverse", path_str(&input)]);
    let entries = r["state"]["entries"].as_array().unwrap();
    let support: Vec<_> = entries
        .iter()
        .filter(|e| f(&e[2]).hypot(f(&e[3])) > 1e-12)
        .collect();
    assert_eq!(support.len(), 1);
    assert_eq!((f(&support[0][0]), f(&support[0][1])), (0.0, 0.0));
    assert!((f(&support[0][2]).hypot(f(&support[0][3])) - 1.0).abs() < 1e-12);
}

#[test]
fn reverse_rejects_malformed_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    std::fs::write(&input, "{\"pairs\": [[[1,0],[0,0],[0,0]]]}").unwrap();
    let out = cvconv(&["reverse", path_str(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("got 3"));
}

#[test]
fn werner_reports_thresholds_and_notes() {
    let r = json(&["werner", "--p", "0.3", "--lambda", "0.5", "--pairs", "1"]);
    assert_eq!(f(&r["threshold"]), 0.25);
    assert!((f(&r["converted_threshold"]) - 5.0 / 14.0).abs() < 1e-15);
    assert!(f(&r["field"]["value"]) > 0.0);
    assert!(f(&r["converted"]["value"]).abs() < 1e-12);
    assert!(r["converted"]["note"].is_string());
    assert_eq!(r["passed"], true);

    let r = json(&["werner", "--p", "0.5", "--lambda", "0.5", "--pairs", "1"]);
    assert!((f(&r["converted"]["value"]) - 0.236_067_4).abs() < 1e-7);
    assert!((f(&r["converted"]["closed_form"]) - f(&r["converted"]["value"])).abs() < 1e-9);
}

#[test]
fn figures_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["figure1", "figure2"] {
        let a = dir.path().join(format!("{cmd}_a.csv"));
        let b = dir.path().join(format!("{cmd}_b.csv"));
        for p in [&a, &b] {
            assert_eq!(cvconv(&[cmd, "--out", path_str(p)]).status.code(), Some(0));
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let meta: Value =
            serde_json::from_slice(&std::fs::read(a.with_extension("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["command"], cmd);
    }
}

#[test]
fn figure1_rows_are_ordered() {
    let out = cvconv(&["figure1"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 61);
    assert!(rows[0].iter().all(|&x| x == 0.0));
    for row in &rows {
        let (cv, pairs) = (row[2], &row[3..]);
        for w in pairs.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        assert!(pairs[7] <= cv + 1e-12);
    }
    for w in rows.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]).skip(2) {
            assert!(*a <= b + 1e-12);
        }
    }
}

#[test]
fn figure2_defaults_and_numeric_agree() {
    let closed = String::from_utf8(cvconv(&["figure2", "--steps", "11"]).stdout).unwrap();
    let numeric =
        String::from_utf8(cvconv(&["figure2", "--steps", "11", "--numeric"]).stdout).unwrap();
    let meta = json(&["figure2", "--steps", "3", "--format", "json"]);
    assert_eq!(f(&meta["config"]["p"]), 0.5);
    for (a, b) in csv_rows(&closed).iter().zip(&csv_rows(&numeric)) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn verify_formulas_passes() {
    let r = json(&["verify", "--suite", "formulas"]);
    assert_eq!(r["failed_count"], 0);
}

#[test]
fn verify_is_deterministic() {
    let args = ["verify", "--suite", "roundtrip", "--seed", "7"];
    let a = cvconv(&args);
    let b = cvconv(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
