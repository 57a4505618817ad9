use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn adaptnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptnav"))
        .args(args)
        .env_remove("ADAPTNAV_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str::<Value>(line).expect("stderr is a JSON error record")["error"].clone()
}

fn small_env(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("env{seed}.json"));
    let out = adaptnav(&["gen-env", "--nodes", "12", "--seed", &seed.to_string(), "-o", p(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect()
}

#[test]
fn gen_env_writes_a_readable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_env(dir.path(), 4);
    let (env, digest) = adaptnav::envfile::read(&path).unwrap();
    assert_eq!(env.node_count(), 12);
    assert_eq!(digest.len(), 64);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["edges", "nodes", "params", "schema"]);
    assert_eq!(json["schema"], "adaptnav-env/1");
}

#[test]
fn gen_env_default_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    assert!(adaptnav(&["gen-env", "-o", p(&path)]).status.success());
    let (env, _) = adaptnav::envfile::read(&path).unwrap();
    let fresh = adaptnav_core::simenv::generate_env(&Default::default()).unwrap();
    assert_eq!(adaptnav::envfile::to_json(&env), adaptnav::envfile::to_json(&fresh));
}

#[test]
fn gen_env_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(small_env(dir.path(), 9)).unwrap();
    let b_path = dir.path().join("again.json");
    assert!(adaptnav(&["gen-env", "--nodes", "12", "--seed", "9", "-o", p(&b_path)])
        .status
        .success());
    assert_eq!(a, std::fs::read(&b_path).unwrap());
    assert_ne!(a, std::fs::read(small_env(dir.path(), 10)).unwrap());
}

#[test]
fn gen_env_rejects_a_single_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = adaptnav(&["gen-env", "--nodes", "1", "-o", p(&dir.path().join("x.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "gen");
}

#[test]
fn run_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path(), 1);
    let report = dir.path().join("r.json");
    let out = adaptnav(&["run", "--env", p(&env), "--episodes", "3", "-o", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "config",
            "cost_convention",
            "environment",
            "episodes",
            "generated_at",
            "schema",
            "summary",
            "version"
        ]
    );
    assert_eq!(json["schema"], "adaptnav-report/1");
    assert_eq!(json["episodes"].as_array().unwrap().len(), 3);
    assert_eq!(json["environment"]["sha256"].as_str().unwrap().len(), 64);

    let stdout = String::from_utf8(out.stdout).unwrap();
    let header = &csv_rows(&stdout)[0];
    assert_eq!(
        header,
        &[
            "report",
            "episodes",
            "sr",
            "osr",
            "spl",
            "tl",
            "gp",
            "gflops_ep",
            "gflops_step",
            "enc_share",
            "hit_rate",
            "forced",
            "gflops_ratio"
        ]
    );

    let listed = adaptnav(&["report", p(&report), p(&report)]);
    assert!(listed.status.success());
    let rows = csv_rows(&String::from_utf8(listed.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].last().unwrap(), "1.000");
}

#[test]
fn run_with_missing_env_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = adaptnav(&[
        "run",
        "--env",
        p(&dir.path().join("nope.json")),
        "-o",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["kind"], "io");
}

#[test]
fn env_params_conflicting_with_the_file_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path(), 2);
    let out = adaptnav(&[
        "run",
        "--env",
        p(&env),
        "--set",
        "env.nodes=20",
        "-o",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "config");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = adaptnav(&["run", "--set", "cache.buckets=3", "-o", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "config");
}

#[test]
fn garbage_report_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema\": 1}").unwrap();
    let out = adaptnav(&["report", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "format");
}

#[test]
fn ablate_over_k() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path(), 3);
    let csv = dir.path().join("k.csv");
    // Cache hits vary with k; the extension alone is what must grow.
    let out = adaptnav(&[
        "ablate",
        "--env",
        p(&env),
        "--episodes",
        "4",
        "--set",
        "cache.enabled=false",
        "--sweep",
        "k=1,2,3,4,5,6",
        "-o",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(&rows[0][..3], ["parameter", "value", "episodes"]);
    assert_eq!(rows.len(), 7);
    let col = rows[0].iter().position(|c| c == "gflops_ep").unwrap();
    let gflops: Vec<f64> = rows[1..].iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(gflops.windows(2).all(|w| w[0] < w[1]), "{gflops:?}");
}

#[test]
fn zero_aggressiveness_matches_disabled_exits() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path(), 5);
    let common = ["--env", p(&env), "--episodes", "3", "--set", "cache.enabled=false"];
    let swept = dir.path().join("a.csv");
    let mut args = vec!["ablate", "--sweep", "a=0", "-o", p(&swept)];
    args.extend(common);
    assert!(adaptnav(&args).status.success());
    let k_only = dir.path().join("k.csv");
    let mut args = vec![
        "ablate",
        "--sweep",
        "k=4",
        "--set",
        "early_exit.enabled=false",
        "-o",
        p(&k_only),
    ];
    args.extend(common);
    assert!(adaptnav(&args).status.success());
    let a = csv_rows(&std::fs::read_to_string(&swept).unwrap());
    let k = csv_rows(&std::fs::read_to_string(&k_only).unwrap());
    assert_eq!(a[1][2..], k[1][2..]);
}

#[test]
fn ablate_with_an_empty_grid_is_a_usage_error() {
    let out = adaptnav(&["ablate", "--sweep", "k="]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "usage");
}

#[test]
fn corrupt_suite_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path(), 6);
    let csv = dir.path().join("c.csv");
    let out = adaptnav(&[
        "corrupt-suite",
        "--env",
        p(&env),
        "--episodes",
        "2",
        "--kinds",
        "low_light",
        "--severity",
        "1",
        "-o",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&std::fs::read_to_string(&csv).unwrap());
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["clean", "low_light", "low_light+median5"]);
}

#[test]
fn saturation_curve_covers_every_layer_pair() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("s.json");
    let out = adaptnav(&["saturation", "--samples", "4", "-o", p(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["samples"], 4);
    assert_eq!(v["similarity"].as_array().unwrap().len(), 11);
}

#[test]
fn gen_env_writes_scan_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let scans = dir.path().join("scans.csv");
    let out = adaptnav(&["gen-env", "--nodes", "12", "-o", p(&env), "--scans", p(&scans)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = adaptnav::scanfile::read(&scans).unwrap();
    let (graph, _) = adaptnav::envfile::read(&env).unwrap();
    assert_eq!(loaded, adaptnav::scanfile::env_scans(&graph).unwrap());
    let first = std::fs::read_to_string(&scans).unwrap();
    assert_eq!(first.lines().next().unwrap().split(',').count(), 361);
}
