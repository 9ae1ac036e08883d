use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pvqueue"));
    c.env_remove("PVQUEUE_SEED");
    c
}

fn here(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(here("golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn verify_identities_table() {
    assert_eq!(stdout_of(&["verify-identities", "--r-max", "8"]), golden("verify_r8.txt"));
}

#[test]
fn pmf_outputs() {
    let base = ["pmf", "--l", "3", "--m", "2", "--t", "2", "--r-red", "5"];
    assert_eq!(stdout_of(&[&base[..], &["--exact"]].concat()), golden("pmf_exact.csv"));
    assert_eq!(stdout_of(&base), golden("pmf_float.csv"));
    assert_eq!(
        stdout_of(&["pmf", "--l", "3", "--m", "2", "--no-time", "--cmax", "6", "--exact"]),
        golden("pmf_notime.csv")
    );
}

#[test]
fn estimate_rows() {
    let out = stdout_of(&["estimate", "--l", "4", "--m", "2", "--t", "20", "--red", "45"]);
    assert_eq!(out, golden("estimate.csv"));
    assert!(out.lines().nth(1).unwrap().starts_with("7.571429,"));
    let hist = stdout_of(&[
        "estimate", "--l", "0", "--m", "0", "--t", "0", "--red", "45", "--estimator", "NP1,NP2,EST1,EST2,Q_BACK",
        "--hist-l", "6", "--hist-m", "2", "--hist-t", "10",
    ]);
    assert_eq!(hist, golden("estimate_history.csv"));
}

#[test]
fn simulate_file_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    stdout_of(&["simulate", "--cycles", "12", "--p", "0.2", "--red", "35", "--seed", "7", "--out", a.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&a).unwrap(), golden("simulate.csv"));
    let out = bin()
        .env("PVQUEUE_SEED", "7")
        .args(["simulate", "--cycles", "12", "--p", "0.2", "--red", "35", "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&b).unwrap(), golden("simulate.csv"));
}

#[test]
fn evaluate_outputs_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = here("fixtures/cycles.csv");
    let report = dir.path().join("report.csv");
    let series = dir.path().join("series.csv");
    stdout_of(&[
        "evaluate", "--input", input.to_str().unwrap(), "--seeds", "20", "--seed", "5",
        "--out", report.to_str().unwrap(), "--plot-data", series.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), golden("evaluate.csv"));
    assert_eq!(std::fs::read_to_string(&series).unwrap(), golden("evaluate_series.csv"));

    let table = stdout_of(&["evaluate", "--input", input.to_str().unwrap(), "--seeds", "20", "--seed", "5"]);
    assert_eq!(table, golden("evaluate_table.txt"));

    // the same run driven by a config file, with a flag overriding one key
    let conf = dir.path().join("pvqueue.conf");
    std::fs::write(&conf, "seeds = 3\nseed = 5\nformat = csv\n").unwrap();
    let via_conf = dir.path().join("conf.csv");
    stdout_of(&[
        "evaluate", "--config", conf.to_str().unwrap(), "--input", input.to_str().unwrap(), "--seeds", "20",
        "--out", via_conf.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&via_conf).unwrap(), golden("evaluate.csv"));

    let json = dir.path().join("report.json");
    stdout_of(&[
        "evaluate", "--input", input.to_str().unwrap(), "--seeds", "4", "--format", "json",
        "--out", json.to_str().unwrap(), "--exclude-zero-queues",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed["metadata"]["exclude_zero_queues"], true);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["pmf", "--l", "3", "--m", "2"]).status.code(), Some(1));
    let bad = run(&["estimate", "--l", "2", "--m", "3", "--t", "5", "--red", "10"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("invalid observation"));
    let missing = run(&["evaluate", "--input", "/nonexistent/cycles.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn in_process_dispatch() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = pvqueue::cli::dispatch(["pvqueue", "pmf", "--l", "3", "--m", "2", "--t", "2", "--r-red", "5", "--exact"], &mut out, &mut err);
    assert_eq!(code, pvqueue::cli::EXIT_OK);
    assert_eq!(String::from_utf8(out).unwrap(), golden("pmf_exact.csv"));
}
