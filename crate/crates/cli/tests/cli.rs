use std::process::{Command, Output};

use serde_json::Value;

fn sbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

#[test]
fn chi_of_half_stable() {
    // φ(λ) = λ^{1/2}, so χ(λ) = λ^{1/2}
    let out = sbm(&["chi", "--phi", "stable:alpha=1.0", "--lambda", "2"]);
    assert!(out.status.success());
    let v: f64 = stdout(&out).parse().unwrap();
    assert!((v - 2f64.sqrt()).abs() < 1e-8, "{v}");
}

#[test]
fn kernel_and_density_print_numbers() {
    let out = sbm(&["kernel", "--phi", "stable:alpha=1.0", "--d", "2", "--which", "G", "--r", "0.5"]);
    assert!(out.status.success());
    let g: f64 = stdout(&out).parse().unwrap();
    assert!((g - 1.0 / std::f64::consts::PI).abs() < 1e-8, "{g}");

    let out = sbm(&["density", "--phi", "stablesum:alpha=1.2,beta=0.6", "--which", "mu", "--t", "0.3"]);
    assert!(out.status.success());
    assert!(stdout(&out).parse::<f64>().unwrap() > 0.0);
}

#[test]
fn renewal_csv_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    let out = sbm(&["renewal", "--phi", "stable:alpha=1.0", "--t", "0.5", "--csv", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,V,v");
    let json: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(json["V"].as_f64().unwrap() > 0.0);
}

#[test]
fn green_mc_writes_estimate_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("est.json");
    let args = [
        "green-mc", "--phi", "stable:alpha=1.0", "--domain", "ball:r=1", "--x", "0,0", "--y", "(0.5,0)",
        "--rho", "0.05", "--n-paths", "500", "--dt", "0.01", "--seed", "9", "--out",
    ];
    let run = |p: &std::path::Path| {
        let mut a = args.to_vec();
        a.push(p.to_str().unwrap());
        let out = sbm(&a);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(p).unwrap()
    };
    let first = run(&path);
    let est: Value = serde_json::from_str(&first).unwrap();
    for key in ["mean", "stderr", "n", "config_hash", "flags"] {
        assert!(est.get(key).is_some(), "missing {key}");
    }
    assert_eq!(est["n"], 500);
    assert!(est["mean"].as_f64().unwrap() > 0.0);
    // same seed, same bytes
    assert_eq!(run(&dir.path().join("again.json")), first);
}

#[test]
fn verify_interior_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = sbm(&[
        "verify", "--claim", "interior", "--phi", "stable:alpha=1.0", "--domain", "ball:r=1", "--pairs", "6",
        "--n-paths", "1000", "--dt", "0.01", "--seed", "4", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["claims"][0]["claim_id"], "green-interior");
    assert_eq!(doc["claims"][0]["pass"], true);
    assert!(path.with_extension("csv").exists());
}

#[test]
fn bad_input_exits_with_error() {
    let out = sbm(&["kernel", "--phi", "nope", "--d", "2", "--which", "j", "--r", "1"]);
    assert!(!out.status.success());
    let out = sbm(&["verify", "--claim", "gest21", "--phi", "stable:alpha=1.0", "--domain", "slab:h=1,d=2"]);
    assert_eq!(out.status.code(), Some(2));
}
