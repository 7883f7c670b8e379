use std::path::Path;
use std::process::{Command, Output};

use sng::dataset::read_fvecs;

fn sng(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sng"))
        .args(args)
        .env("SNG_DATA_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sng(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .parse()
        .unwrap()
}

#[test]
fn gen_uniform_writes_requested_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-uniform", "--n", "1000", "--d", "8", "--rho", "1.0", "--seed", "7", "--out", "a.fvecs"]);
    let ds = read_fvecs(dir.path().join("a.fvecs")).unwrap();
    assert_eq!((ds.n(), ds.d()), (1000, 8));
    assert!(ds.data().chunks(8).all(|r| r.iter().map(|v| v * v).sum::<f32>() <= 1.0 + 1e-5));
}

#[test]
fn tune_prints_rounded_mean_degree() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-uniform", "--n", "2000", "--d", "8", "--seed", "3", "--out", "a.fvecs"]);
    let out = ok(dir.path(), &["tune", "--data", "a.fvecs", "--alpha1", "1.2", "--alpha2", "1.2", "--json-out", "t.json"]);
    assert_eq!(value(&out, "r_star"), value(&out, "r_bar").round());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(json["r_star"].as_f64().unwrap(), value(&out, "r_star"));
}

#[test]
fn bench_recall_is_nondecreasing_in_l() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-uniform", "--n", "10000", "--d", "8", "--seed", "1", "--out", "base.fvecs"]);
    ok(dir.path(), &["gen-uniform", "--n", "500", "--d", "8", "--seed", "2", "--out", "q.fvecs"]);
    ok(dir.path(), &["gt", "--base", "base.fvecs", "--queries", "q.fvecs", "--k", "10", "--out", "gt.ivecs"]);
    let out = ok(
        dir.path(),
        &["bench", "--data", "base.fvecs", "--queries", "q.fvecs", "--gt", "gt.ivecs", "--ls", "10,20,50", "--csv-out", "sweep.csv"],
    );
    assert!(out.contains("hardware-dependent"));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let recalls: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(recalls.len(), 3);
    assert!(recalls.windows(2).all(|w| w[1] >= w[0]), "{recalls:?}");
}

#[test]
fn single_thread_builds_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-gmm", "--n", "3000", "--d", "4", "--clusters", "3", "--seed", "9", "--out", "m.fvecs"]);
    for out in ["g1.bin", "g2.bin"] {
        ok(dir.path(), &["build", "--data", "m.fvecs", "--r", "16", "--alpha", "1.2", "--out", out]);
    }
    let a = std::fs::read(dir.path().join("g1.bin")).unwrap();
    let b = std::fs::read(dir.path().join("g2.bin")).unwrap();
    assert_eq!(a, b);

    let out = ok(dir.path(), &["degrees", "--graph", "g1.bin", "--csv-out", "deg.csv"]);
    assert!(out.contains("max=") && out.contains("mode="));
    ok(dir.path(), &["trace", "--data", "m.fvecs", "--owners", "0,5", "--out-dir", "tr"]);
    let trace = std::fs::read_to_string(dir.path().join("tr/trace_5.csv")).unwrap();
    assert!(trace.starts_with("t,s_size,delta,processed,rho\n"));
    assert!(trace.lines().last().unwrap().split(',').nth(3).unwrap() == "2999");
}

#[test]
fn errors_exit_nonzero_with_distinct_messages() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = sng(dir.path(), &["build", "--bogus"]);
    let missing = sng(dir.path(), &["degrees", "--graph", "nope.bin"]);
    std::fs::write(dir.path().join("bad.bin"), b"XXXX0000").unwrap();
    let corrupt = sng(dir.path(), &["degrees", "--graph", "bad.bin"]);
    let mut messages = Vec::new();
    for out in [&unknown, &missing, &corrupt] {
        assert!(!out.status.success());
        let err = String::from_utf8_lossy(&out.stderr).to_string();
        assert!(!err.is_empty());
        messages.push(err);
    }
    assert!(messages[1].contains("nope.bin"));
    assert_ne!(messages[1], messages[2]);
    assert_ne!(messages[0], messages[1]);
}
