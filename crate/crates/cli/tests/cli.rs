use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gossip-lab"));
    cmd.env_remove("GOSSIP_LAB_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Set UPDATE_GOLDEN=1 to rewrite the pinned files.
fn check_golden(name: &str, args: &[&str]) {
    let out = run(args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &text).unwrap();
    }
    let pinned = fs::read_to_string(&path).expect("golden file present");
    assert_eq!(text, pinned, "help text drifted from {}", path.display());
}

#[test]
fn help_text_is_pinned() {
    check_golden("help.txt", &["--help"]);
    check_golden("simulate_help.txt", &["simulate", "--help"]);
    check_golden("sweep_help.txt", &["sweep", "--help"]);
    check_golden("infect_help.txt", &["infect", "--help"]);
    check_golden("hybrid_help.txt", &["hybrid", "--help"]);
    check_golden("majority_pair_help.txt", &["majority-pair", "--help"]);
    check_golden("oracle_help.txt", &["oracle", "--help"]);
    for verb in ["identity", "drift", "stirling", "kl", "two-party"] {
        check_golden(&format!("oracle_{}_help.txt", verb.replace('-', "_")), &["oracle", verb, "--help"]);
    }
}

const SIMULATE: [&str; 12] = [
    "simulate", "--protocol", "majority", "--n", "1024", "--eps", "0.25", "--seed", "7", "--replicas", "10",
    "--omit-wall-time",
];

#[test]
fn simulate_is_deterministic() {
    let a = run(&SIMULATE);
    let b = run(&SIMULATE);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    let stdout = run(&SIMULATE).stdout;
    let mut args = SIMULATE.to_vec();
    let p = path.to_str().unwrap();
    args.extend(["--out", p]);
    let out = run(&args);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read(&path).unwrap(), stdout);
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["simulate", "--n", "64", "--replicas", "3", "--omit-wall-time"];
    let env = bin().args(args).env("GOSSIP_LAB_SEED", "7").output().unwrap();
    let mut flagged = args.to_vec();
    flagged.extend(["--seed", "7"]);
    assert_eq!(env.stdout, run(&flagged).stdout);
    assert_ne!(env.stdout, run(&args).stdout);
}

#[test]
fn spec_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"n_values": [32, 64], "epsilon_values": [0.3], "replicas": 2, "master_seed": 5,
            "initial_condition": {"kind": "unanimous-1"}}"#,
    )
    .unwrap();
    let summary = dir.path().join("summary.json");
    let out = run(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--replicas",
        "3",
        "--summary",
        summary.to_str().unwrap(),
        "--omit-wall-time",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.lines().skip(1).all(|l| l.contains(",5,") && l.contains(",true,1,true,")));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(summary).unwrap()).unwrap();
    let cells = doc["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    for key in ["n", "epsilon", "success_rate", "wilson_low", "wilson_high", "mean_rounds", "median_rounds"] {
        assert!(cells[0].get(key).is_some(), "{key}");
    }
    assert_eq!(cells[0]["success_rate"], 1.0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--n", "3"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--n", "16,32"]).status.code(), Some(1));
    assert_eq!(run(&["oracle", "two-party", "--delta", "0.5"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--spec", "/nonexistent/spec.json"]).status.code(), Some(2));
    let bad = run(&["frobnicate"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!bad.stderr.is_empty());
}

#[test]
fn oracle_identity_grid() {
    let out = run(&["oracle", "identity", "--lmax", "30"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["max_gap"].as_f64().unwrap() <= 1e-12);
    assert_eq!(doc["cases"], 19 * 30 * 31 / 2);
}

#[test]
fn oracle_two_party_json() {
    let out = run(&["oracle", "two-party", "--delta", "0.01", "--eps", "0.1"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["t_min"], 3);
    assert!((doc["p"].as_f64().unwrap() - 0.2475).abs() < 1e-15);
}

#[test]
fn oracle_verbs_emit_json() {
    for args in [
        vec!["oracle", "drift", "--eps", "0.4", "--n", "1000"],
        vec!["oracle", "stirling", "--r", "5"],
        vec!["oracle", "kl"],
    ] {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}");
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap();
    }
    let out = run(&["oracle", "stirling", "--r", "1"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["check"]["exact"], "2");
    assert_eq!(doc["holds"], true);
}

#[test]
fn infect_and_hybrid_run() {
    let out = run(&["infect", "--model", "uniform-push", "--n", "64", "--rounds", "5", "--replicas", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("replica,round,infected"));
    assert_eq!(text.lines().count(), 1 + 4 * 6);
    let out = run(&["hybrid", "--protocol", "copy-node-one", "--n", "8", "--replicas", "3", "--delta", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["k_star"], 1);
    assert_eq!(doc["max_gap"], 1.0);
    let out = run(&["majority-pair", "--n", "64", "--b", "64", "--replicas", "5", "--eps", "0.3"]);
    assert!(out.status.success());
    let out = run(&["majority-pair", "--n", "64", "--b", "3"]);
    assert_eq!(out.status.code(), Some(1));
}
