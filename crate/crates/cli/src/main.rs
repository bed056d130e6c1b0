//! `achilles` — command-line front end for the trading laboratory.
//!
//! Subcommands: `ingest` (enrich bar CSVs with RSI/EMA), `train` (fit the
//! LSTM and write model/scaler/loss artifacts), `rollout` (stacked
//! autoregressive prediction CSV), `backtest` (simulated-clock run with a
//! full report directory) and `report` (rebuild report figures from a trade
//! log and verify them against the stored summary).
//!
//! Every failure exits non-zero with a single machine-parseable JSON line on
//! stderr; successes print a one-line JSON summary on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use achilles_core::backtest::{
    daily_pnl_csv, emit_report, emit_train_artifacts, replay_report, run_backtest,
    run_train_pipeline, waterfall_svg, AppConfig, Manifest, PredictionSourceConfig,
};
use achilles_core::broker::read_trade_log;
use achilles_core::dataset::fit_scaler;
use achilles_core::forecast::{rollout, write_frame_csv, RolloutConfig};
use achilles_core::marketdata::{load_bars, write_enriched_csv, Timeframe};
use achilles_core::model::load_params;

#[derive(Parser)]
#[command(name = "achilles", version, about = "Minute-bar LSTM forecasting and trading-bot backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a bar CSV, compute RSI/EMA and write the enriched CSV.
    Ingest {
        /// Input bar CSV (Time,Open,High,Low,Close,Volume).
        #[arg(long)]
        bars: PathBuf,
        /// Bar interval in minutes.
        #[arg(long, default_value_t = 1)]
        timeframe: u32,
        /// Output enriched CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional config document for indicator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the model per the config document's `train` section.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory for model.bin, scaler.json, loss_history.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the training seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stacked autoregressive rollout to a prediction CSV.
    Rollout {
        #[arg(long)]
        config: PathBuf,
        /// Output prediction CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's rollout horizon (minutes).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run the backtest described by the config document.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Run directory for the report files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Replay trades.csv from a run directory and verify/re-emit figures.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        let line = serde_json::json!({ "error": format!("{err:#}") });
        eprintln!("{line}");
        std::process::exit(1);
    }
}

fn load_app_config(path: &Path) -> Result<AppConfig> {
    AppConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            bars,
            timeframe,
            out,
            config,
        } => {
            let app = match config {
                Some(path) => load_app_config(&path)?,
                None => AppConfig::default(),
            };
            let raw = fs::read_to_string(&bars)
                .with_context(|| format!("reading {}", bars.display()))?;
            let series = load_bars(raw.as_bytes(), Timeframe::new(timeframe)?)?;
            let rows = series.len();
            let range_violations = series.range_violations();
            let series = series.enrich(&app.indicator)?;
            let first_defined = series.first_defined_row();
            let mut sink = Vec::new();
            write_enriched_csv(&series, &mut sink)?;
            write_file(&out, &sink)?;
            println!(
                "{}",
                serde_json::json!({
                    "command": "ingest",
                    "rows": rows,
                    "first_defined_row": first_defined,
                    "range_violations": range_violations,
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Train {
            config,
            out_dir,
            seed,
        } => {
            let app = load_app_config(&config)?;
            let artifacts = run_train_pipeline(&app, seed)?;
            let mut manifest = Manifest::new(
                "train",
                Some(seed.unwrap_or(app.train.config.seed)),
                serde_json::to_value(&app)?,
            );
            for input in &app.train.inputs {
                manifest.record_input(&input.path)?;
            }
            manifest.outputs = vec![
                "model.bin".into(),
                "scaler.json".into(),
                "loss_history.csv".into(),
                "dataset_summary.json".into(),
                "manifest.json".into(),
            ];
            emit_train_artifacts(&artifacts, &out_dir, &manifest)?;
            let last = artifacts.history.last();
            println!(
                "{}",
                serde_json::json!({
                    "command": "train",
                    "samples": artifacts.train_set.len() + artifacts.test_set.len(),
                    "epochs": artifacts.history.len(),
                    "final_train_mse": last.map(|l| l.train_mse),
                    "final_val_mse": last.and_then(|l| l.val_mse),
                    "param_count": artifacts.params.param_count(),
                    "out_dir": out_dir,
                })
            );
            Ok(())
        }
        Command::Rollout {
            config,
            out,
            horizon,
        } => {
            let app = load_app_config(&config)?;
            let section = &app.rollout;
            let bars_path = section
                .bars
                .as_ref()
                .ok_or_else(|| anyhow!("config rollout.bars is required"))?;
            let model_path = section
                .model
                .as_ref()
                .ok_or_else(|| anyhow!("config rollout.model is required"))?;
            let raw = fs::read_to_string(bars_path)
                .with_context(|| format!("reading {}", bars_path.display()))?;
            let series = load_bars(raw.as_bytes(), Timeframe::new(section.timeframe_minutes)?)?
                .enrich(&app.indicator)?;
            let params = load_params(
                fs::File::open(model_path)
                    .with_context(|| format!("opening {}", model_path.display()))?,
            )?;
            let scaler = match &section.scaler {
                Some(path) => serde_json::from_str(
                    &fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => fit_scaler(&series, &app.window)?,
            };
            let rollout_config = RolloutConfig {
                horizon: horizon.unwrap_or(section.horizon),
                synthetic_volume_window: section.synthetic_volume_window,
            };
            let outcome = rollout(&params, &series, &scaler, &app.window, &rollout_config)?;
            let mut sink = Vec::new();
            write_frame_csv(&outcome.frame, &mut sink)?;
            write_file(&out, &sink)?;
            println!(
                "{}",
                serde_json::json!({
                    "command": "rollout",
                    "horizon": rollout_config.horizon,
                    "predicted": outcome.frame.len(),
                    "truncated": outcome.truncated,
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Backtest { config, out_dir } => {
            let app = load_app_config(&config)?;
            let bt = app
                .backtest
                .as_ref()
                .ok_or_else(|| anyhow!("config has no backtest section"))?;
            let report = run_backtest(bt, &app.indicator, &app.window, &app.bot)?;
            let mut manifest = Manifest::new("backtest", None, serde_json::to_value(&app)?);
            manifest.record_input(&bt.bars)?;
            manifest.record_input(&bt.sentiment)?;
            match &bt.predictions {
                PredictionSourceConfig::File { path } => manifest.record_input(path)?,
                PredictionSourceConfig::Refresh { model }
                | PredictionSourceConfig::Stacked { model } => manifest.record_input(model)?,
            }
            if let Some(scaler) = &bt.scaler {
                manifest.record_input(scaler)?;
            }
            manifest.outputs = vec![
                "trades.csv".into(),
                "daily_pnl.csv".into(),
                "equity.csv".into(),
                "summary.json".into(),
                "waterfall.svg".into(),
                "decisions.jsonl".into(),
                "manifest.json".into(),
            ];
            emit_report(&report, &out_dir, &manifest)?;
            println!(
                "{}",
                serde_json::json!({
                    "command": "backtest",
                    "minutes": report.minutes_stepped,
                    "completed_orders": report.completed_orders,
                    "force_closed": report.force_closed_orders,
                    "initial_balance": report.initial_balance,
                    "final_balance": report.final_balance,
                    "total_realized": report.total_realized,
                    "warnings": report.warnings,
                    "out_dir": out_dir,
                })
            );
            Ok(())
        }
        Command::Report { run_dir } => run_report(&run_dir),
    }
}

/// Replays `trades.csv`, checks the result against `summary.json` and
/// rewrites the derived figures (identical bytes when consistent).
fn run_report(run_dir: &Path) -> Result<()> {
    let manifest_raw = fs::read_to_string(run_dir.join("manifest.json"))
        .with_context(|| format!("reading manifest in {}", run_dir.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&manifest_raw)?;
    let bt = manifest
        .pointer("/config/backtest")
        .ok_or_else(|| anyhow!("manifest has no backtest config"))?;
    let initial_balance = bt
        .get("initial_balance")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| anyhow!("manifest lacks initial_balance"))?;
    let multiplier = bt
        .get("contract_multiplier")
        .and_then(|v| v.as_f64())
        .unwrap_or(100.0);
    let limits = bt
        .get("limits")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()?
        .unwrap_or_default();

    let trades_raw = fs::read(run_dir.join("trades.csv"))
        .with_context(|| format!("reading trades.csv in {}", run_dir.display()))?;
    let events = read_trade_log(trades_raw.as_slice())?;
    let report = replay_report(&events, initial_balance, multiplier, limits)?;

    let summary_raw = fs::read_to_string(run_dir.join("summary.json"))?;
    let summary: serde_json::Value = serde_json::from_str(&summary_raw)?;
    let stored_final = summary
        .get("final_balance")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| anyhow!("summary.json lacks final_balance"))?;
    if report.final_balance != stored_final {
        bail!(
            "replayed final balance {} disagrees with stored {}",
            report.final_balance,
            stored_final
        );
    }
    fs::write(run_dir.join("daily_pnl.csv"), daily_pnl_csv(&report))?;
    fs::write(run_dir.join("waterfall.svg"), waterfall_svg(&report))?;
    println!(
        "{}",
        serde_json::json!({
            "command": "report",
            "verified": true,
            "events": events.len(),
            "final_balance": report.final_balance,
            "total_realized": report.total_realized,
            "run_dir": run_dir,
        })
    );
    Ok(())
}
