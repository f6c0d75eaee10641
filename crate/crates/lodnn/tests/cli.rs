use std::path::Path;
use std::process::{Command, Output};

use lodnn::config::ExperimentConfig;
use lodnn::study::{build_surrogate, patch_audit, problem_coefficient};
use lodnn::RayonExecutor;
use serde_json::{json, Value};

fn lodnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodnn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, v: &Value) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn value_after(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn patch_errors(text: &str) -> Vec<(usize, f64)> {
    text.lines()
        .filter_map(|l| {
            let w: Vec<&str> = l.split_whitespace().collect();
            (w.len() == 4 && w[0] == "patch" && w[2] == "error").then(|| (w[1].parse().unwrap(), w[3].parse().unwrap()))
        })
        .collect()
}

fn surrogate_config(dir: &Path) -> Value {
    json!({
        "study": "H-sweep",
        "problem": { "dim": 1, "n_coarse": [6], "r_eps": 2, "r_h": 2, "alpha": 1.0, "beta": 10.0, "coefficient": { "kind": "random" } },
        "lod": { "ell": { "rule": "fixed", "values": [1] } },
        "surrogate": { "eta": { "rule": "fixed", "values": [0.25] }, "network": dir.join("net.lnn") },
        "output": dir.join("out"),
        "seed": 17
    })
}

#[test]
fn build_then_compare_reproduces_in_memory_patch_errors() {
    let dir = tempfile::tempdir().unwrap();
    let v = surrogate_config(dir.path());
    let cfg_path = write_config(dir.path(), &v);
    let built = stdout(&lodnn(&["build-network", "--config", &cfg_path]));
    assert!(built.contains("wrote"));
    assert!(dir.path().join("net.lnn").exists());

    let cmp = stdout(&lodnn(&["compare", "--config", &cfg_path, "--threads", "2"]));
    let from_disk = patch_errors(&cmp);

    let cfg = ExperimentConfig::from_json(&v.to_string()).unwrap();
    let hier = cfg.problem.hierarchy(6).unwrap();
    let a = problem_coefficient(&cfg, &hier).unwrap();
    let s = build_surrogate(&cfg, &hier, 1, 0.25).unwrap();
    let in_memory = patch_audit(&s, &a, 1, &RayonExecutor::new(1).unwrap()).unwrap();
    assert_eq!(from_disk, in_memory);
    assert_eq!(from_disk.len(), 2);
    assert!(from_disk.iter().all(|e| e.1 <= 0.25));
    assert!(value_after(&cmp, "l2_gap") <= 0.25);
    assert_eq!(value_after(&cmp, "surrogate_patches 2 of"), 6.0);

    let contract = stdout(&lodnn(&["local-contract", "--config", &cfg_path]));
    assert_eq!(patch_errors(&contract), in_memory);
    assert!(contract.contains("within true"));
}

#[test]
fn compare_rejects_a_network_for_another_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let v = surrogate_config(dir.path());
    let cfg_path = write_config(dir.path(), &v);
    stdout(&lodnn(&["build-network", "--config", &cfg_path]));
    let mut other = v.clone();
    other["problem"]["n_coarse"] = json!([7]);
    let other_path = write_config(dir.path(), &other);
    let o = lodnn(&["compare", "--config", &other_path]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn spanning_patches_make_petrov_galerkin_equal_galerkin() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "study": "ell-sweep",
        "problem": { "dim": 2, "n_coarse": [4], "r_eps": 2, "r_h": 2, "alpha": 1.0, "beta": 10.0, "coefficient": { "kind": "random" } },
        "lod": { "ell": { "rule": "fixed", "values": [4, 5] } },
        "seed": 2
    });
    let out = stdout(&lodnn(&["solve-lod", "--config", &write_config(dir.path(), &v)]));
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let gap: f64 = r[5].parse().unwrap();
        assert!(gap <= 1e-8, "{gap}");
    }
}

#[test]
fn oracle_compare_has_no_gap() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = surrogate_config(dir.path());
    v["problem"]["n_coarse"] = json!([8]);
    v["lod"]["ell"]["values"] = json!([2]);
    v["surrogate"]["oracle"] = json!(true);
    let out = stdout(&lodnn(&["compare", "--config", &write_config(dir.path(), &v)]));
    assert!(value_after(&out, "euclidean_gap") <= 1e-10);
    assert!(value_after(&out, "matrix_gap") <= 1e-10);
    assert!(patch_errors(&out).iter().all(|e| e.1 <= 1e-10));
}

#[test]
fn study_writes_csv_and_manifest_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "study": "nn-calculus-suite",
        "problem": { "dim": 1, "n_coarse": [4], "r_eps": 2, "r_h": 2, "alpha": 1.0, "beta": 10.0, "coefficient": { "kind": "random" } },
        "samples": 3
    });
    let cfg_path = write_config(dir.path(), &v);
    let out_dir = dir.path().join("results");
    stdout(&lodnn(&["study", "--config", &cfg_path, "--out", out_dir.to_str().unwrap(), "--seed", "99", "--threads", "2"]));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,") && l.contains(",99,")));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], json!(99));
}

#[test]
fn bad_invocations_fail_cleanly() {
    assert!(!lodnn(&["frobnicate"]).status.success());
    assert!(!lodnn(&["study"]).status.success());
    let o = lodnn(&["study", "--config", "/nonexistent/cfg.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"study": "H-sweep", "problem": {"dim": 5}}"#).unwrap();
    let o = lodnn(&["study", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
}
