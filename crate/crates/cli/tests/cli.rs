//! End-to-end checks of the `achilles` binary: every subcommand against a
//! small generated fixture set, exit-code discipline and run determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_achilles"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_fixtures(dir: &Path) {
    // One trading day of sine bars (Monday 2026-01-05), base 400, amp 10.
    let mut bars = String::from("Time,Open,High,Low,Close,Volume\n");
    for m in 0..720i64 {
        let phase = m as f64 * std::f64::consts::TAU / 120.0;
        let c = 400.0 + 10.0 * phase.sin();
        bars.push_str(&format!(
            "2026-01-05 {:02}:{:02}:00,{c:.6},{:.6},{:.6},{c:.6},{}\n",
            m / 60,
            m % 60,
            c + 0.05,
            c - 0.05,
            20 + (m % 9),
        ));
    }
    fs::write(dir.join("bars.csv"), bars).unwrap();

    let mut feed = String::from("Time,Source,Probability,Label\n");
    for k in 0..48i64 {
        let m = k * 15;
        feed.push_str(&format!(
            "2026-01-05 {:02}:{:02}:00,wire,0.91,Positive\n",
            m / 60,
            m % 60
        ));
    }
    fs::write(dir.join("sentiment.csv"), feed).unwrap();

    let config = serde_json::json!({
        "indicator": { "rsi_period": 14, "ema_length": 14, "ema_variant": "paper" },
        "window": { "lookback": 12, "feature_count": 7, "target_column": "close" },
        "model": { "input_features": 7, "lstm1_units": 6, "lstm2_units": 4, "lookback": 12 },
        "train": {
            "config": { "learning_rate": 0.05, "epochs": 2, "batch_size": 32, "seed": 7, "gradient_clip_norm": 1.0 },
            "split_ratio": 0.8,
            "inputs": [ { "path": "bars.csv", "timeframe_minutes": 1 } ]
        },
        "rollout": {
            "horizon": 30,
            "synthetic_volume_window": 20,
            "bars": "bars.csv",
            "timeframe_minutes": 1,
            "model": "train-run/model.bin",
            "scaler": "train-run/scaler.json"
        },
        "bot": { "risk": 0.3 },
        "backtest": {
            "start": "2026-01-05 02:00:00",
            "end": "2026-01-05 04:30:00",
            "initial_balance": 1000.0,
            "bars": "bars.csv",
            "timeframe_minutes": 1,
            "sentiment": "sentiment.csv",
            "predictions": { "mode": "refresh", "model": "train-run/model.bin" },
            "scaler": "train-run/scaler.json",
            "contract_multiplier": 100.0,
            "force_close_at_end": true
        }
    });
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();
}

#[test]
fn full_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_fixtures(root);

    let out = run_ok(bin().args([
        "ingest",
        "--bars",
        root.join("bars.csv").to_str().unwrap(),
        "--timeframe",
        "1",
        "--out",
        root.join("enriched.csv").to_str().unwrap(),
    ]));
    let line: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("ingest prints one JSON line");
    assert_eq!(line["rows"], 720);
    assert!(root.join("enriched.csv").exists());

    run_ok(bin().args([
        "train",
        "--config",
        root.join("config.json").to_str().unwrap(),
        "--out-dir",
        root.join("train-run").to_str().unwrap(),
    ]));
    for artifact in ["model.bin", "scaler.json", "loss_history.csv", "manifest.json"] {
        assert!(root.join("train-run").join(artifact).exists(), "{artifact}");
    }

    let out = run_ok(bin().args([
        "rollout",
        "--config",
        root.join("config.json").to_str().unwrap(),
        "--out",
        root.join("predictions.csv").to_str().unwrap(),
        "--horizon",
        "25",
    ]));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["predicted"], 25);
    let predictions = fs::read_to_string(root.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("Date,Price\n"));
    assert_eq!(predictions.lines().count(), 26);

    let out = run_ok(bin().args([
        "backtest",
        "--config",
        root.join("config.json").to_str().unwrap(),
        "--out-dir",
        root.join("bt-a").to_str().unwrap(),
    ]));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["minutes"], 151);

    // Determinism: a second run emits byte-identical files.
    run_ok(bin().args([
        "backtest",
        "--config",
        root.join("config.json").to_str().unwrap(),
        "--out-dir",
        root.join("bt-b").to_str().unwrap(),
    ]));
    for name in [
        "manifest.json",
        "trades.csv",
        "daily_pnl.csv",
        "equity.csv",
        "summary.json",
        "waterfall.svg",
        "decisions.jsonl",
    ] {
        let a = fs::read(root.join("bt-a").join(name)).unwrap();
        let b = fs::read(root.join("bt-b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let out = run_ok(bin().args([
        "report",
        "--run-dir",
        root.join("bt-a").to_str().unwrap(),
    ]));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["verified"], true);
}

#[test]
fn unknown_subcommand_usage_and_exit_code() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn failures_emit_one_json_error_line() {
    let out = bin()
        .args(["train", "--config", "/nonexistent/config.json", "--out-dir", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let mut lines = stderr.lines();
    let line = lines.next().expect("one stderr line");
    assert!(lines.next().is_none(), "expected a single line: {stderr}");
    let parsed: serde_json::Value = serde_json::from_str(line).expect("machine-parseable");
    assert!(parsed["error"].is_string());
}

#[test]
fn backtest_reports_first_uncovered_minute() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_fixtures(root);
    // Push the range past the data end.
    let config = fs::read_to_string(root.join("config.json")).unwrap();
    let config = config.replace("2026-01-05 04:30:00", "2026-01-05 23:00:00");
    fs::write(root.join("config.json"), config).unwrap();
    run_ok(bin().args([
        "train",
        "--config",
        root.join("config.json").to_str().unwrap(),
        "--out-dir",
        root.join("train-run").to_str().unwrap(),
    ]));
    let out = bin()
        .args([
            "backtest",
            "--config",
            root.join("config.json").to_str().unwrap(),
            "--out-dir",
            root.join("bt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("2026-01-05 12:00:00"),
        "diagnostic should name the first uncovered minute: {stderr}"
    );
}
