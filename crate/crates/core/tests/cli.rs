use std::path::Path;
use std::process::{Command, Output};

fn arl(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arl"))
        .args(args)
        .env("ARL_OUTPUT_ROOT", root)
        .current_dir(root)
        .output()
        .expect("arl runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn gen_data_is_reproducible_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(arl(root, &["gen-data", "--out", "a"]));
    ok(arl(root, &["gen-data", "--out", "b"]));
    let a = std::fs::read(root.join("a/dataset.bin")).unwrap();
    assert_eq!(a, std::fs::read(root.join("b/dataset.bin")).unwrap());
    let ds = arl_core::data::Dataset::load(&root.join("a/dataset.bin")).unwrap();
    assert_eq!(ds.num_transitions(), 100_000);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["transitions"], 100_000);
    assert!(root.join("a/config.toml").exists());

    let again = arl(root, &["gen-data", "--out", "a"]);
    assert_eq!(code(&again), 2);
    ok(arl(root, &["gen-data", "--out", "a", "--force", "--n", "10"]));
    assert_eq!(
        arl_core::data::Dataset::load(&root.join("a/dataset.bin")).unwrap().num_trajectories(),
        10
    );
}

#[test]
fn train_then_eval_writes_per_goal_and_aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(arl(root, &["gen-data", "--n", "30"]));
    let common = ["--set", "agent.batch_size=8", "--set", "agent.log_every=5"];
    let mut train = vec!["train", "--variant", "iql", "--seeds", "0,1,2,3", "--steps", "10"];
    train.extend_from_slice(&["--dataset", "gen-data/dataset.bin"]);
    train.extend_from_slice(&common);
    ok(arl(root, &train));
    for s in 0..4 {
        let log = std::fs::read_to_string(root.join(format!("train/iql_seed{s}/metrics.jsonl"))).unwrap();
        assert_eq!(log.lines().count(), 2);
    }
    ok(arl(
        root,
        &["eval", "--variant", "iql", "--seeds", "0,1,2,3", "--tasks", "0,1,2,3,4", "--episodes", "2"],
    ));
    let csv = std::fs::read_to_string(root.join("eval/results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 20 + 1, "{csv}");
    assert!(lines[21].starts_with("iql,all,all"));

    let missing = arl(root, &["eval", "--variant", "arle"]);
    assert_eq!(code(&missing), 2);

    ok(arl(root, &["dump-grid", "--checkpoint", "train/iql_seed0/checkpoint.bin", "--nx", "6", "--ny", "5"]));
    let grid = std::fs::read_to_string(root.join("dump-grid/grid.csv")).unwrap();
    assert!(grid.lines().count() > 1);
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for args in [
        &["train", "--set", "agent.colour=3"][..],
        &["train", "--variant", "nope"],
        &["train", "--set", "agent.tau=1.5"],
        &["train", "--set", "agent.variant=\"iql\""],
        &["gen-data", "--env", "nowhere"],
        &["dump-grid"],
        &["train", "--dataset", "missing.bin"],
    ] {
        let o = arl(root, args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    std::fs::write(root.join("c.toml"), "[agent]\ntau = 0.8\nbogus = 1\n").unwrap();
    assert_eq!(code(&arl(root, &["--config", "c.toml", "tabular"])), 2);
}

#[test]
fn numeric_blowup_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(arl(root, &["gen-data", "--n", "20"]));
    let o = arl(
        root,
        &[
            "train",
            "--variant",
            "iql",
            "--steps",
            "50",
            "--dataset",
            "gen-data/dataset.bin",
            "--set",
            "agent.lr=1e200",
            "--set",
            "agent.batch_size=8",
        ],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("train/iql_seed0/checkpoint.bin").exists());
}

#[test]
fn tabular_sweep_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let o = ok(arl(root, &["tabular"]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("20 instances"));
    let jsonl = std::fs::read_to_string(root.join("tabular/records.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 20);
    for line in jsonl.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(r["maps"].as_array().unwrap().len() >= 3);
    }
    assert!(root.join("tabular/summary.csv").exists());
}
