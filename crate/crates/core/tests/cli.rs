use std::path::Path;
use std::process::{Command, Output};

fn mcpool(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcpool"))
        .args(args)
        .current_dir(dir)
        .env_remove("MCPOOL_SEED")
        .output()
        .unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn levs_on_even_ring_cuts_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(
        &[
            "maxcut", "--graph", "ring:8", "--method", "levs", "--seeds", "1", "--out", "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][6], "1");
    assert!(String::from_utf8_lossy(&out.stdout).contains("levs"));
}

#[test]
fn missing_gset_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(
        &["maxcut", "--graph", "gset:missing.txt", "--method", "levs"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source not found"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["maxcut", "--graph", "ring:8", "--ratio", "1.5"][..],
        &["pool-demo", "--graph", "ring:8", "--ratio", "1.5"],
        &["pool-demo", "--graph", "ring:8", "--ratio", "0"],
        &["maxcut", "--graph", "hexagon:3"],
        &["maxcut", "--graph", "ring:8", "--method", "annealing"],
        &["gen-multipartite", "--centers", "1"],
        &["train-graph", "--lr", "-1"],
        &["gradcheck", "--bogus"],
    ] {
        let out = mcpool(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn ratio_error_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(&["pool-demo", "--graph", "ring:8", "--ratio", "1.5"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ratio"));
}

#[test]
fn gen_multipartite_writes_header_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(
        &[
            "gen-multipartite",
            "--centers",
            "3",
            "--per-class",
            "2",
            "--max-cluster",
            "2",
            "--seed",
            "1",
            "--out",
            "d.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let first = std::fs::read(dir.path().join("d.jsonl")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().next().unwrap().contains("\"mcpool-ds\""));
    mcpool(
        &[
            "gen-multipartite",
            "--centers",
            "3",
            "--per-class",
            "2",
            "--max-cluster",
            "2",
            "--seed",
            "1",
            "--out",
            "e.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(first, std::fs::read(dir.path().join("e.jsonl")).unwrap());
}

#[test]
fn gradcheck_passes_by_default_and_fails_with_coarse_steps() {
    let dir = tempfile::tempdir().unwrap();
    let a = mcpool(&["gradcheck", "--seed", "42"], dir.path());
    let b = mcpool(&["gradcheck", "--seed", "42"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("quadratic_form"));
    let coarse = mcpool(&["gradcheck", "--eps", "1e-1"], dir.path());
    assert_ne!(coarse.status.code(), Some(0));
}

#[test]
fn seed_variable_sets_the_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mcpool"))
        .args(["maxcut", "--graph", "ring:6", "--method", "levs"])
        .env("MCPOOL_SEED", "17")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&String::from_utf8_lossy(&out.stdout));
    assert_eq!(rows[0][2], "17");
}

#[test]
fn json_reports_are_row_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(
        &[
            "maxcut",
            "--graph",
            "grid2d:3x3",
            "--method",
            "gw,bruteforce",
            "--seeds",
            "0,1",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["method"], "gw");
    assert_eq!(rows[1]["cut_fraction"], 1.0);
    assert!(dir.path().join("r.json.meta").exists());
}

#[test]
fn pool_demo_reports_half_the_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(&["pool-demo", "--graph", "grid2d:4x4", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("supernodes") && l.ends_with(" 8")));
}

#[test]
fn node_classification_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpool(&["train-node", "--epochs", "150", "--out", "report.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["test_accuracy"].as_f64().unwrap() >= 0.9);
}
