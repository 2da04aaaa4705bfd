//! Binary-level tests: exit codes, emitted files, flag handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lendfee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lendfee"))
        .args(args)
        .env_remove("LENDFEE_GENERATE_CONFIG")
        .env_remove("LENDFEE_REPLAY_CONFIG")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

const SCENARIO: &str = "seed = 11\nn_securities = 6\ndays = 7\nrequests_per_day = [30, 40]\n";

fn write_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, SCENARIO).unwrap();
    path
}

fn generate_log(dir: &Path) -> PathBuf {
    let scenario = write_scenario(dir);
    let out = lendfee(&[
        "generate",
        "--config",
        scenario.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("log.csv")
}

#[test]
fn generate_writes_log_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    assert!(log.is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 11);
    assert!(manifest["outputs_sha256"]["log.csv"].is_string());
    // data horizon, not wall clock
    assert!(manifest["timestamp_ms"].as_i64().unwrap() > 6 * 86_400_000);

    // rerunning the same scenario reproduces the same digests
    let second = tempfile::tempdir().unwrap();
    write_scenario(second.path());
    let out = lendfee(&[
        "generate",
        "--config",
        second.path().join("scenario.toml").to_str().unwrap(),
        "--out",
        second.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(dir.path().join("manifest.json")).unwrap(),
        std::fs::read(second.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn generate_missing_config_exits_one() {
    let out = lendfee(&[
        "generate",
        "--config",
        "/no/such/file.toml",
        "--out",
        "/tmp",
    ]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("config not found"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn generate_invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "days = 0\n").unwrap();
    let out = lendfee(&[
        "generate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn replay_emits_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    let rep = dir.path().join("rep");
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let revenue = std::fs::read_to_string(rep.join("revenue.csv")).unwrap();
    let lines: Vec<&str> = revenue.lines().collect();
    assert_eq!(lines.len(), 1 + 8, "8 policy rows: {revenue}");
    // 7 days, 4+1 windows -> 3 window columns
    assert_eq!(lines[0], "policy,d0-d4,d1-d5,d2-d6");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 4);
    }

    let ratios = std::fs::read_to_string(rep.join("ratios.csv")).unwrap();
    let mut rows = 0;
    for line in ratios.lines().skip(1) {
        let sum: f64 = line
            .split(',')
            .skip(2)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() <= 1e-9, "row sums to {sum}: {line}");
        rows += 1;
    }
    assert_eq!(rows, 3 * 8);

    assert_eq!(
        std::fs::read_to_string(rep.join("reports.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rep.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["input_sha256"].is_string());
    assert_eq!(manifest["outputs_sha256"].as_object().unwrap().len(), 3);
    assert!(stdout(&out).contains("oracle"));
}

#[test]
fn replay_exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());

    let out = lendfee(&["replay", "--log", "/no/such/log.csv", "--out", "/tmp/x"]);
    assert_eq!(code(&out), 2, "ingestion failure");

    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--policies",
        "linucb,frobnicate",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(code(&out), 3, "unknown policy");
    assert!(stderr(&out).contains("frobnicate"), "{}", stderr(&out));

    // a plain file where the output directory should go
    let blocker = dir.path().join("blocked");
    std::fs::write(&blocker, "x").unwrap();
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "unwritable output dir: {}", stderr(&out));

    // too short a span for the default 4+1 window
    let short = dir.path().join("short");
    std::fs::create_dir(&short).unwrap();
    std::fs::write(
        short.join("scenario.toml"),
        "seed = 11\nn_securities = 4\ndays = 3\nrequests_per_day = [10, 12]\nregime_shifts = []\n",
    )
    .unwrap();
    let out = lendfee(&[
        "generate",
        "--config",
        short.join("scenario.toml").to_str().unwrap(),
        "--out",
        short.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let out = lendfee(&[
        "replay",
        "--log",
        short.join("log.csv").to_str().unwrap(),
        "--out",
        short.join("rep").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "replay failure: {}", stderr(&out));
    assert!(stderr(&out).contains("spans"), "{}", stderr(&out));
}

#[test]
fn replay_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    let cfg = dir.path().join("replay.toml");
    std::fs::write(&cfg, "[replay]\nseed = 1\ntrain_days = 4\n").unwrap();
    let rep = dir.path().join("rep");
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rep.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
}

#[test]
fn replay_merge_flag_changes_ratio_shape() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    let rep = dir.path().join("rep");
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--merge-rule-into-ml",
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ratios = std::fs::read_to_string(rep.join("ratios.csv")).unwrap();
    let header = ratios.lines().next().unwrap();
    assert_eq!(
        header,
        "window,policy,own_vwaf,ml_based/rule_based,market_vwaf"
    );
    for line in ratios.lines().skip(1) {
        let sum: f64 = line
            .split(',')
            .skip(2)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() <= 1e-9, "merged row sums to {sum}");
    }
}

#[test]
fn replay_state_snapshot_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    let snap = dir.path().join("states.json");
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--save-state",
        snap.to_str().unwrap(),
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    assert_eq!(parsed["version"], 1);
    assert_eq!(parsed["states"].as_object().unwrap().len(), 8);

    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--warm-start",
        snap.to_str().unwrap(),
        "--out",
        dir.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "warm start failed: {}", stderr(&out));

    // tampered version is refused
    let mut tampered: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    tampered["version"] = serde_json::json!(99);
    std::fs::write(&snap, tampered.to_string()).unwrap();
    let out = lendfee(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--warm-start",
        snap.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn inspect_reports_counts_and_rejects_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let log = generate_log(dir.path());
    let out = lendfee(&["inspect", "--log", log.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let rows = std::fs::read_to_string(&log).unwrap().lines().count() - 1;
    assert!(
        text.contains(&format!("rows read               {rows}")),
        "{text}"
    );
    assert!(text.contains("date span"));
    assert!(text.contains("utilization"));
    assert!(text.contains("bid fee bands"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = lendfee(&["inspect", "--log", empty.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no data rows"), "{}", stderr(&out));
}

#[test]
fn inspect_counts_clamped_features() {
    let dir = tempfile::tempdir().unwrap();
    let header = "timestamp,security_id,bid,quantity,market_value,own_vwaf,ml_rate,market_vwaf,rule_rate,utilization,market_share,alt_supply,return_signal,bid_signal_scaled,offered_rate,accept_flag";
    let row = "1000,A,0.03,100,50000,0.02,0.025,0.03,0.035,1.7,0.2,0.3,0.4,0.5,,";
    let log = dir.path().join("clamp.csv");
    std::fs::write(&log, format!("{header}\n{row}\n")).unwrap();
    let out = lendfee(&["inspect", "--log", log.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("clamped features        1"),
        "{}",
        stdout(&out)
    );
}
