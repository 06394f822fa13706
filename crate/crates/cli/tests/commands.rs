use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orlicz-indiff"));
    c.env_remove("ORLICZ_INDIFF_SEED");
    c
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const TRINOMIAL: &str = r#"{"probs": [0.2, 0.5, 0.3], "delta_s": [[1.0], [0.0], [-1.0]], "x0": 0.0}"#;

#[test]
fn constant_claim_price() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", TRINOMIAL);
    let out = bin()
        .args(["price", "--market"])
        .arg(&m)
        .args(["--utility", "exponential", "--gamma", "1", "--claim-const", "5", "--x0", "0", "--json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["report"]["price"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(v["replicable"], true);
}

#[test]
fn replicable_claim_from_the_market_file() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", r#"{"probs": [0.2, 0.5, 0.3], "delta_s": [[1.0], [0.0], [-1.0]], "claim": [3.0, 1.0, -1.0]}"#);
    let out = bin().args(["price", "--market"]).arg(&m).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("replicable          yes"), "{text}");
    let line = text.lines().find(|l| l.starts_with("price ")).unwrap();
    let p: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((p - 1.0).abs() < 1e-9);
}

#[test]
fn unnormalized_probabilities_exit_2() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", r#"{"probs": [0.5, 0.4], "delta_s": [[1.0], [-1.0]]}"#);
    let out = bin().args(["price", "--market"]).arg(&m).args(["--claim-const", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("probabilities must sum to 1"));
}

#[test]
fn arbitrage_and_bad_claims_exit_2() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", r#"{"probs": [0.5, 0.5], "delta_s": [[1.0], [0.5]]}"#);
    assert_eq!(bin().args(["maximize", "--market"]).arg(&m).output().unwrap().status.code(), Some(2));
    let ok = write(&d, "ok.json", TRINOMIAL);
    assert_eq!(bin().args(["dual", "--market"]).arg(&ok).args(["--claim", "1,2"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["dual", "--market"]).arg(&ok).args(["--utility", "custom"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn maximize_and_dual_agree() {
    let d = TempDir::new().unwrap();
    let m = write(&d, "m.json", TRINOMIAL);
    let u = write(&d, "u.json", r#"{"family": "log_quadratic"}"#);
    let common = |cmd: &str| {
        let out = bin()
            .arg(cmd)
            .arg("--market")
            .arg(&m)
            .args(["--utility", "custom", "--spec"])
            .arg(&u)
            .args(["--claim=0.5,-0.2,1", "--x0", "0.3", "--json"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)
    };
    let p = common("maximize");
    let q = common("dual");
    assert!((p["value"].as_f64().unwrap() - q["value"].as_f64().unwrap()).abs() < 1e-9);
    assert!(q["foc_q_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn example_two() {
    let out = bin().args(["example", "--which", "2", "--delta", "0.3", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["h_star"].as_f64().unwrap(), 0.7);
    assert!(v["singular_mass"].as_f64().unwrap() > 0.0);
    assert!((v["hedging_delta"].as_f64().unwrap() + 0.3).abs() < 1e-12);
    let table = bin().args(["example", "--which", "2"]).output().unwrap();
    assert!(!String::from_utf8_lossy(&table.stdout).contains("FAIL"));
}

#[test]
fn example_one() {
    let out = bin().args(["example", "--which", "1", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["h_star"].as_f64().unwrap(), 1.0);
    assert_eq!(v["hedging_delta"].as_f64().unwrap(), 0.0);
    assert_eq!(bin().args(["example", "--which", "1", "--alpha", "zero"]).output().unwrap().status.code(), Some(0));
}

#[test]
fn slow_weights_exit_3() {
    let out = bin().args(["example", "--which", "2", "--delta", "0.99", "--p1", "0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mixture_file() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "mix.json", r#"{"gamma": 1.0, "z_atoms": "paper-default 50", "claim": {"type": "delta_y", "delta": 0.3}}"#);
    let out = bin().args(["example", "--mixture"]).arg(&f).arg("--json").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["h_star"].as_f64().unwrap(), 0.7);
}

#[test]
fn verify_filters_and_is_reproducible() {
    let run = |seed: &str| bin().args(["verify", "--suite", "fatou", "--json"]).env("ORLICZ_INDIFF_SEED", seed).output().unwrap();
    let a = run("5");
    let b = run("5");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["seed"], 5);
    assert_eq!(v["suites"].as_array().unwrap().len(), 1);
    assert_eq!(v["suites"][0]["name"], "fatou");
}

#[test]
fn verify_default_run_passes() {
    let out = bin().args(["verify", "--seeds", "100"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall PASS"));
}

#[test]
fn norm_of_a_constant() {
    let out = bin().args(["norm", "--values", "-2,-2", "--gamma", "1.5", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let n = json(&out)["luxemburg"].as_f64().unwrap();
    assert!((n - 1.5 * 2.0 / std::f64::consts::LN_2).abs() < 1e-10);
}

#[test]
fn report_to_file() {
    let d = TempDir::new().unwrap();
    let target = d.path().join("r.json");
    let out = bin().args(["norm", "--values", "1,0", "--json", "--out"]).arg(&target).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert!(v["orlicz_dual"].as_f64().unwrap() > 0.0);
}
