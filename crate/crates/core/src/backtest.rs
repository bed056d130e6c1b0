//! Deterministic backtest harness and report emission.
//!
//! A simulated clock walks every minute of the configured range, skipping
//! weekends. Each minute must have a real bar (a gap aborts with the first
//! uncovered minute); the strategy steps once per minute and its events feed
//! the trade log. Predictions come from one of three sources: a replayed
//! CSV, a single stacked rollout, or refresh mode where the seed window
//! absorbs each real bar and re-predicts the next few minutes.
//!
//! Run directory layout: `manifest.json`, `trades.csv`, `daily_pnl.csv`,
//! `equity.csv`, `summary.json`, `waterfall.svg`, `decisions.jsonl`. Two
//! runs from equal inputs emit byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{
    write_trade_log, AccountLimits, AccountState, BrokerError, TradeEvent,
};
use crate::dataset::{
    self, fit_scaler, make_windows, merge, split, DatasetError, SampleSet, Scaler, WindowSpec,
};
use crate::forecast::{
    self, evaluate, ForecastError, MetricsReport, PredictionFrame, RolloutState,
};
use crate::marketdata::{
    load_bars, BarSeries, IndicatorParams, MarketDataError, Timeframe, TIME_FORMAT,
};
use crate::model::{
    init_params, load_params, save_params, train, EpochLoss, ModelConfig, ModelError, ModelParams,
    Predictor, TrainConfig,
};
use crate::sentiment::{FileSentimentProvider, SentimentError, SentimentProvider};
use crate::strategy::{Bot, BotConfig, DecisionRecord, StrategyError};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no bar for trading minute {0}")]
    MissingBar(NaiveDateTime),
    #[error("market data error: {0}")]
    Market(#[from] MarketDataError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("forecast error: {0}")]
    Forecast(#[from] ForecastError),
    #[error("sentiment error: {0}")]
    Sentiment(#[from] SentimentError),
    #[error("broker error: {0}")]
    Broker(#[from] BrokerError),
    #[error("strategy error: {0}")]
    Strategy(#[from] StrategyError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BacktestError {
    let path = path.into();
    move |source| BacktestError::Io { path, source }
}

pub fn is_weekend(t: NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// FNV-1a of raw bytes, as stamped into manifests for input digests.
pub fn fnv64_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Accepts `YYYY-MM-DD HH:MM:SS` or a bare `YYYY-MM-DD` (midnight).
pub fn parse_config_time(s: &str) -> Result<NaiveDateTime, BacktestError> {
    if let Ok(t) = NaiveDateTime::parse_from_str(s, TIME_FORMAT) {
        return Ok(t);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap())
        .map_err(|e| BacktestError::Config(format!("bad timestamp `{s}`: {e}")))
}

/// Where the strategy's prediction frame comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PredictionSourceConfig {
    /// Replay a `Date,Price` CSV.
    File { path: PathBuf },
    /// Re-predict the next `slice_fwd` minutes after every real bar.
    Refresh { model: PathBuf },
    /// One stacked rollout covering the whole range up front.
    Stacked { model: PathBuf },
}

/// The backtest section of the config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub start: String,
    pub end: String,
    #[serde(default = "default_initial_balance")]
    pub initial_balance: f64,
    pub bars: PathBuf,
    #[serde(default = "default_timeframe")]
    pub timeframe_minutes: u32,
    pub sentiment: PathBuf,
    pub predictions: PredictionSourceConfig,
    /// Scaler fitted at training time. When absent, one is fitted on the
    /// warmup bars before the trading range (the trading symbol may differ
    /// from the training symbol, so refitting is the default).
    #[serde(default)]
    pub scaler: Option<PathBuf>,
    #[serde(default = "default_multiplier")]
    pub contract_multiplier: f64,
    #[serde(default)]
    pub limits: AccountLimits,
    #[serde(default = "default_true")]
    pub force_close_at_end: bool,
    #[serde(default = "default_volume_window")]
    pub synthetic_volume_window: usize,
    /// Optional bar CSV for the metrics echo (one-step evaluation).
    #[serde(default)]
    pub eval_bars: Option<PathBuf>,
    #[serde(default = "default_split_ratio")]
    pub eval_split: f64,
}

fn default_initial_balance() -> f64 {
    1000.0
}
fn default_timeframe() -> u32 {
    1
}
fn default_multiplier() -> f64 {
    100.0
}
fn default_true() -> bool {
    true
}
fn default_volume_window() -> usize {
    20
}
fn default_split_ratio() -> f64 {
    0.8
}

/// Prediction machinery once inputs are loaded.
pub enum PredictionInput {
    /// A fixed timestamp -> price map (file replay or stacked rollout).
    Static(BTreeMap<NaiveDateTime, f64>),
    /// Refresh mode: re-predict `lookahead` minutes after each bar.
    Refresh {
        predictor: Box<dyn Predictor>,
        state: RolloutState,
        lookahead: usize,
    },
}

/// A backtest with all inputs resolved in memory.
pub struct PreparedBacktest {
    pub series: BarSeries,
    pub provider: Box<dyn SentimentProvider>,
    pub predictions: PredictionInput,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub initial_balance: f64,
    pub contract_multiplier: f64,
    pub limits: AccountLimits,
    pub bot: BotConfig,
    pub force_close_at_end: bool,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub initial_balance: f64,
    pub final_balance: f64,
    /// Sum of realized PnL in close order; `final - initial` by construction.
    pub total_realized: f64,
    pub daily_pnl: Vec<(NaiveDate, f64)>,
    pub completed_orders: usize,
    pub force_closed_orders: usize,
    pub minutes_stepped: usize,
    pub warnings: Vec<String>,
    pub metrics: Option<MetricsReport>,
    #[serde(skip)]
    pub equity: Vec<(NaiveDateTime, f64, f64)>,
    #[serde(skip)]
    pub events: Vec<TradeEvent>,
    #[serde(skip)]
    pub decisions: Vec<DecisionRecord>,
}

struct RollingPredictions {
    map: BTreeMap<NaiveDateTime, f64>,
    engine: Option<(Box<dyn Predictor>, RolloutState, usize)>,
}

impl RollingPredictions {
    fn new(input: PredictionInput) -> Self {
        match input {
            PredictionInput::Static(map) => RollingPredictions { map, engine: None },
            PredictionInput::Refresh {
                predictor,
                state,
                lookahead,
            } => RollingPredictions {
                map: BTreeMap::new(),
                engine: Some((predictor, state, lookahead)),
            },
        }
    }

    /// Predicts `steps` values from the current state and keys them onto
    /// consecutive minutes starting at `first_key`.
    fn project(&mut self, first_key: NaiveDateTime, steps: usize) -> Result<(), BacktestError> {
        let Some((predictor, state, _)) = self.engine.as_mut() else {
            return Ok(());
        };
        let mut probe = state.clone();
        for i in 0..steps {
            match probe.predict_step(predictor.as_ref()) {
                Ok((_, price)) => {
                    self.map
                        .insert(first_key + chrono::Duration::minutes(i as i64), price);
                }
                Err(ForecastError::NonFinitePrediction { .. }) => break,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// Makes sure `now` has a prediction (bootstrap and post-weekend).
    fn ensure_coverage(&mut self, now: NaiveDateTime) -> Result<(), BacktestError> {
        if self.engine.is_some() && !self.map.contains_key(&now) {
            let lookahead = self.engine.as_ref().unwrap().2;
            self.project(now, lookahead + 1)?;
        }
        Ok(())
    }

    /// Absorbs the observed bar and re-predicts the next minutes.
    fn after_bar(&mut self, bar: &crate::marketdata::Bar) -> Result<(), BacktestError> {
        if let Some((_, state, _)) = self.engine.as_mut() {
            state.push_real_bar(bar)?;
            let lookahead = self.engine.as_ref().unwrap().2;
            self.project(bar.time + chrono::Duration::minutes(1), lookahead)?;
        }
        Ok(())
    }

    /// The maximal contiguous minute run around `now`, clipped to the bot's
    /// slice window, as a valid frame. Returns `None` when `now` is
    /// uncovered.
    fn window_frame(
        &self,
        now: NaiveDateTime,
        back: usize,
        fwd: usize,
    ) -> Option<PredictionFrame> {
        self.map.get(&now)?;
        let mut first = now;
        for _ in 0..back {
            let prev = first - chrono::Duration::minutes(1);
            if self.map.contains_key(&prev) {
                first = prev;
            } else {
                break;
            }
        }
        let mut entries = Vec::with_capacity(back + fwd + 1);
        let mut t = first;
        let last = now + chrono::Duration::minutes(fwd as i64);
        while t <= last {
            match self.map.get(&t) {
                Some(price) => entries.push((t, *price)),
                None => break,
            }
            t += chrono::Duration::minutes(1);
        }
        PredictionFrame::new(entries).ok()
    }
}

/// Runs the simulated clock over a fully prepared backtest.
pub fn run_prepared(prepared: PreparedBacktest) -> Result<BacktestReport, BacktestError> {
    let PreparedBacktest {
        series,
        provider,
        predictions,
        start,
        end,
        initial_balance,
        contract_multiplier,
        limits,
        bot: bot_config,
        force_close_at_end,
        metrics,
    } = prepared;
    let mut account = AccountState::new(initial_balance, contract_multiplier, limits)?;
    let mut bot = Bot::new(bot_config)?;
    let mut rolling = RollingPredictions::new(predictions);
    let mut events: Vec<TradeEvent> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut equity: Vec<(NaiveDateTime, f64, f64)> = Vec::new();
    let mut daily: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut minutes_stepped = 0usize;
    let mut last_price: Option<(NaiveDateTime, f64)> = None;

    let bars = series.bars();
    let mut bar_idx = bars.partition_point(|b| b.time < start);
    let mut now = start;
    while now <= end {
        if is_weekend(now) {
            now += chrono::Duration::minutes(1);
            continue;
        }
        while bar_idx < bars.len() && bars[bar_idx].time < now {
            bar_idx += 1;
        }
        if bar_idx >= bars.len() || bars[bar_idx].time != now {
            return Err(BacktestError::MissingBar(now));
        }
        let bar = bars[bar_idx].clone();
        rolling.ensure_coverage(now)?;
        let frame = rolling.window_frame(now, bot.config().slice_back, bot.config().slice_fwd);
        let outcome = bot.step(now, frame.as_ref(), &series, provider.as_ref(), &mut account)?;
        for event in &outcome.events {
            if let Some(pnl) = event.realized_pnl {
                *daily.entry(event.time.date()).or_insert(0.0) += pnl;
            }
        }
        events.extend(outcome.events);
        decisions.push(outcome.record);
        equity.push((now, account.balance(), account.equity(bar.close)));
        last_price = Some((now, bar.close));
        rolling.after_bar(&bar)?;
        minutes_stepped += 1;
        now += chrono::Duration::minutes(1);
    }

    let mut force_closed = 0usize;
    if force_close_at_end {
        if let Some((t, price)) = last_price {
            let open_ids: Vec<u64> = account.open_orders().iter().map(|o| o.id).collect();
            for id in open_ids {
                let (event, pnl) = account.force_close_order(id, price, t)?;
                *daily.entry(t.date()).or_insert(0.0) += pnl;
                events.push(event);
                force_closed += 1;
            }
            if force_closed > 0 {
                warnings.push(format!(
                    "{force_closed} open order(s) force-closed at range end ({t})"
                ));
                if let Some(last) = equity.last_mut() {
                    *last = (last.0, account.balance(), account.equity(price));
                }
            }
        }
    } else if !account.open_orders().is_empty() {
        warnings.push(format!(
            "{} order(s) left open at range end (force-close disabled)",
            account.open_orders().len()
        ));
    }

    Ok(BacktestReport {
        initial_balance,
        final_balance: account.balance(),
        total_realized: account.realized_total(),
        daily_pnl: daily.into_iter().collect(),
        completed_orders: account.closed_orders().len(),
        force_closed_orders: force_closed,
        minutes_stepped,
        warnings,
        metrics,
        equity,
        events,
        decisions,
    })
}

fn read_to_string(path: &Path) -> Result<String, BacktestError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn load_enriched_series(
    path: &Path,
    timeframe_minutes: u32,
    indicator: &IndicatorParams,
) -> Result<BarSeries, BacktestError> {
    let raw = read_to_string(path)?;
    let series = load_bars(raw.as_bytes(), Timeframe::new(timeframe_minutes)?)?;
    Ok(series.enrich(indicator)?)
}

fn load_scaler(path: &Path) -> Result<Scaler, BacktestError> {
    let raw = read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

/// Builds a one-step-ahead test set from a bar CSV and evaluates the model
/// on its chronological tail.
fn metrics_echo(
    eval_bars: &Path,
    timeframe_minutes: u32,
    split_ratio: f64,
    indicator: &IndicatorParams,
    window: &WindowSpec,
    scaler: &Scaler,
    predictor: &dyn Predictor,
) -> Result<MetricsReport, BacktestError> {
    let series = load_enriched_series(eval_bars, timeframe_minutes, indicator)?;
    let set = make_windows(&series, window, scaler)?;
    if set.is_empty() {
        return Err(BacktestError::Config(format!(
            "eval series {} yields no samples",
            eval_bars.display()
        )));
    }
    let (_, test) = split(&set, split_ratio)?;
    let target = if test.is_empty() { &set } else { &test };
    Ok(evaluate(predictor, target, scaler)?)
}

/// Loads every input named by the config and runs the backtest.
pub fn run_backtest(
    config: &BacktestConfig,
    indicator: &IndicatorParams,
    window: &WindowSpec,
    bot: &BotConfig,
) -> Result<BacktestReport, BacktestError> {
    let start = parse_config_time(&config.start)?;
    let end = parse_config_time(&config.end)?;
    if config.initial_balance <= 0.0 {
        return Err(BacktestError::Config("initial balance must be positive".into()));
    }
    let series = load_enriched_series(&config.bars, config.timeframe_minutes, indicator)?;
    let sentiment_raw = read_to_string(&config.sentiment)?;
    let provider = FileSentimentProvider::from_csv(sentiment_raw.as_bytes())?;

    // The scaler and model seed use only bars before the trading range.
    let warmup = || -> Result<BarSeries, BacktestError> {
        let warm_bars: Vec<_> = series
            .bars()
            .iter()
            .filter(|b| b.time < start)
            .cloned()
            .collect();
        Ok(BarSeries::new(series.timeframe(), warm_bars)?.enrich(indicator)?)
    };
    let mut metrics = None;
    let predictions = match &config.predictions {
        PredictionSourceConfig::File { path } => {
            let raw = read_to_string(path)?;
            let entries = forecast::read_frame_entries(raw.as_bytes())?;
            PredictionInput::Static(entries.into_iter().collect())
        }
        PredictionSourceConfig::Refresh { model } | PredictionSourceConfig::Stacked { model } => {
            let file = fs::File::open(model).map_err(io_err(model))?;
            let params = load_params(file)?;
            let warm = warmup()?;
            let scaler = match &config.scaler {
                Some(path) => load_scaler(path)?,
                None => fit_scaler(&warm, window)?,
            };
            if let Some(eval_bars) = &config.eval_bars {
                metrics = Some(metrics_echo(
                    eval_bars,
                    config.timeframe_minutes,
                    config.eval_split,
                    indicator,
                    window,
                    &scaler,
                    &params,
                )?);
            }
            let state =
                RolloutState::from_series(&warm, &scaler, window, config.synthetic_volume_window)?;
            match &config.predictions {
                PredictionSourceConfig::Refresh { .. } => PredictionInput::Refresh {
                    predictor: Box::new(params),
                    state,
                    lookahead: bot.slice_fwd,
                },
                _ => {
                    // Stacked: one rollout spanning the whole range.
                    let mut state = state;
                    let needed = (end - state.last_time()).num_minutes().max(0) as usize
                        + bot.slice_fwd
                        + 1;
                    let mut map = BTreeMap::new();
                    for _ in 0..needed {
                        match state.predict_step(&params) {
                            Ok((t, price)) => {
                                map.insert(t, price);
                            }
                            Err(ForecastError::NonFinitePrediction { .. }) => break,
                            Err(e) => return Err(e.into()),
                        }
                    }
                    PredictionInput::Static(map)
                }
            }
        }
    };
    run_prepared(PreparedBacktest {
        series,
        provider: Box::new(provider),
        predictions,
        start,
        end,
        initial_balance: config.initial_balance,
        contract_multiplier: config.contract_multiplier,
        limits: config.limits,
        bot: *bot,
        force_close_at_end: config.force_close_at_end,
        metrics,
    })
}

/// Rebuilds report figures from a trade log alone, for the `report`
/// subcommand: replay the events, regroup realized PnL by close date.
pub fn replay_report(
    events: &[TradeEvent],
    initial_balance: f64,
    contract_multiplier: f64,
    limits: AccountLimits,
) -> Result<BacktestReport, BacktestError> {
    let account =
        crate::broker::replay_trade_log(events, initial_balance, contract_multiplier, limits)?;
    let mut daily: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut force_closed = 0usize;
    for event in events {
        if let Some(pnl) = event.realized_pnl {
            *daily.entry(event.time.date()).or_insert(0.0) += pnl;
        }
        if event.event == crate::broker::EventKind::ForceClose {
            force_closed += 1;
        }
    }
    Ok(BacktestReport {
        initial_balance,
        final_balance: account.balance(),
        total_realized: account.realized_total(),
        daily_pnl: daily.into_iter().collect(),
        completed_orders: account.closed_orders().len(),
        force_closed_orders: force_closed,
        minutes_stepped: 0,
        warnings: Vec::new(),
        metrics: None,
        equity: Vec::new(),
        events: events.to_vec(),
        decisions: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub initial_balance: f64,
    pub final_balance: f64,
    pub total_realized: f64,
    pub completed_orders: usize,
    pub force_closed_orders: usize,
    pub minutes_stepped: usize,
    pub trading_days: usize,
    pub warnings: Vec<String>,
    pub metrics: Option<MetricsReport>,
}

/// Writes the run directory: trade log, daily PnL (Table-6 shape), equity
/// curve, summary JSON, waterfall SVG, decision log and manifest.
pub fn emit_report(
    report: &BacktestReport,
    run_dir: &Path,
    manifest: &Manifest,
) -> Result<(), BacktestError> {
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let write = |name: &str, bytes: &[u8]| -> Result<(), BacktestError> {
        let path = run_dir.join(name);
        fs::write(&path, bytes).map_err(io_err(path))
    };

    let mut trades = Vec::new();
    write_trade_log(&report.events, &mut trades)?;
    write("trades.csv", &trades)?;

    write("daily_pnl.csv", daily_pnl_csv(report).as_bytes())?;

    let mut equity = String::from("time,balance,equity\n");
    for (t, balance, eq) in &report.equity {
        equity.push_str(&format!("{},{},{}\n", t.format(TIME_FORMAT), balance, eq));
    }
    write("equity.csv", equity.as_bytes())?;

    let summary = RunSummary {
        initial_balance: report.initial_balance,
        final_balance: report.final_balance,
        total_realized: report.total_realized,
        completed_orders: report.completed_orders,
        force_closed_orders: report.force_closed_orders,
        minutes_stepped: report.minutes_stepped,
        trading_days: report.daily_pnl.len(),
        warnings: report.warnings.clone(),
        metrics: report.metrics,
    };
    write(
        "summary.json",
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;

    write("waterfall.svg", waterfall_svg(report).as_bytes())?;

    let mut decisions = String::new();
    for record in &report.decisions {
        decisions.push_str(&serde_json::to_string(record)?);
        decisions.push('\n');
    }
    write("decisions.jsonl", decisions.as_bytes())?;

    write(
        "manifest.json",
        (serde_json::to_string_pretty(manifest)? + "\n").as_bytes(),
    )?;
    Ok(())
}

/// Table-6 shape: date rows in order, then a TOTAL row, at two decimals.
pub fn daily_pnl_csv(report: &BacktestReport) -> String {
    let mut out = String::from("date,profit\n");
    for (date, pnl) in &report.daily_pnl {
        out.push_str(&format!("{date},{pnl:.2}\n"));
    }
    out.push_str(&format!("TOTAL,{:.2}\n", report.total_realized));
    out
}

/// A minimal deterministic waterfall: one bar per day, green up, red down,
/// cumulative baseline.
pub fn waterfall_svg(report: &BacktestReport) -> String {
    let days = &report.daily_pnl;
    let width = 80 + days.len().max(1) * 60;
    let height = 320usize;
    let mut cumulative = Vec::with_capacity(days.len());
    let mut acc = 0.0;
    for (_, pnl) in days {
        let start = acc;
        acc += pnl;
        cumulative.push((start, acc));
    }
    let lo = cumulative
        .iter()
        .flat_map(|(a, b)| [*a, *b])
        .fold(0.0f64, f64::min);
    let hi = cumulative
        .iter()
        .flat_map(|(a, b)| [*a, *b])
        .fold(0.0f64, f64::max);
    let span = (hi - lo).max(1e-9);
    let scale_y = |v: f64| 30.0 + (hi - v) / span * 240.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"40\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"#999\" stroke-width=\"1\"/>\n",
        scale_y(0.0),
        width - 20
    ));
    for (i, ((date, pnl), (from, to))) in days.iter().zip(&cumulative).enumerate() {
        let x = 50 + i * 60;
        let (top, bottom) = if to >= from { (*to, *from) } else { (*from, *to) };
        let y = scale_y(top);
        let h = (scale_y(bottom) - y).max(1.0);
        let color = if *pnl >= 0.0 { "#2e8b57" } else { "#c0392b" };
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"40\" height=\"{h:.2}\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{date}</text>\n",
            x + 20,
            height - 28
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{pnl:.2}</text>\n",
            x + 20,
            height - 14
        ));
    }
    svg.push_str(&format!(
        "<text x=\"40\" y=\"20\" font-size=\"12\">total {:.2}</text>\n",
        report.total_realized
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Deterministic run manifest: seeds, config echo and input digests. Equal
/// manifests imply equal outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Manifest {
            tool: format!("achilles {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), BacktestError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        self.inputs
            .insert(path.display().to_string(), fnv64_hex(&bytes));
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The single config document and the pipelines behind the CLI subcommands.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainInput {
    pub path: PathBuf,
    #[serde(default = "default_timeframe")]
    pub timeframe_minutes: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub config: TrainConfig,
    pub split_ratio: f64,
    pub inputs: Vec<TrainInput>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            config: TrainConfig::default(),
            split_ratio: 0.8,
            inputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutSection {
    pub horizon: usize,
    pub synthetic_volume_window: usize,
    pub bars: Option<PathBuf>,
    pub timeframe_minutes: u32,
    pub model: Option<PathBuf>,
    pub scaler: Option<PathBuf>,
}

impl Default for RolloutSection {
    fn default() -> Self {
        RolloutSection {
            horizon: 60,
            synthetic_volume_window: 20,
            bars: None,
            timeframe_minutes: 1,
            model: None,
            scaler: None,
        }
    }
}

/// The whole config document. Every field has a default; subcommands read
/// the sections they need.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub indicator: IndicatorParams,
    pub window: WindowSpec,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub rollout: RolloutSection,
    pub bot: BotConfig,
    pub backtest: Option<BacktestConfig>,
}

impl AppConfig {
    /// Loads the document and resolves every relative path against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, BacktestError> {
        let raw = read_to_string(path)?;
        let mut config: AppConfig = serde_json::from_str(&raw)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for input in &mut config.train.inputs {
            resolve(&mut input.path);
        }
        if let Some(p) = &mut config.rollout.bars {
            resolve(p);
        }
        if let Some(p) = &mut config.rollout.model {
            resolve(p);
        }
        if let Some(p) = &mut config.rollout.scaler {
            resolve(p);
        }
        if let Some(bt) = &mut config.backtest {
            resolve(&mut bt.bars);
            resolve(&mut bt.sentiment);
            if let Some(p) = &mut bt.scaler {
                resolve(p);
            }
            if let Some(p) = &mut bt.eval_bars {
                resolve(p);
            }
            match &mut bt.predictions {
                PredictionSourceConfig::File { path } => resolve(path),
                PredictionSourceConfig::Refresh { model }
                | PredictionSourceConfig::Stacked { model } => resolve(model),
            }
        }
        Ok(config)
    }
}

pub struct TrainArtifacts {
    pub params: ModelParams,
    pub scaler: Scaler,
    pub history: Vec<EpochLoss>,
    pub train_set: SampleSet,
    pub test_set: SampleSet,
}

/// The full training pipeline: enrich each source, fit one shared scaler on
/// the training fraction of every source, window, merge, split and train.
pub fn run_train_pipeline(
    config: &AppConfig,
    seed_override: Option<u64>,
) -> Result<TrainArtifacts, BacktestError> {
    if config.train.inputs.is_empty() {
        return Err(BacktestError::Config("train.inputs is empty".into()));
    }
    if config.window.lookback != config.model.lookback
        || config.window.feature_count != config.model.input_features
    {
        return Err(BacktestError::Config(format!(
            "window ({}x{}) and model ({}x{}) dimensions disagree",
            config.window.lookback,
            config.window.feature_count,
            config.model.lookback,
            config.model.input_features
        )));
    }
    let ratio = config.train.split_ratio;
    let mut enriched = Vec::new();
    for input in &config.train.inputs {
        enriched.push(load_enriched_series(
            &input.path,
            input.timeframe_minutes,
            &config.indicator,
        )?);
    }
    // One shared scaler over the training fraction of every source, so
    // merged samples and price readout stay coherent.
    let mut rows = Vec::new();
    for series in &enriched {
        let (series_rows, _, _) = dataset::feature_rows(series, &config.window)?;
        let cut = ((series_rows.len() as f64) * ratio).floor() as usize;
        rows.extend_from_slice(&series_rows[..cut.max(1).min(series_rows.len())]);
    }
    let scaler = Scaler::fit(&rows, config.window.feature_count)?;
    let sets = enriched
        .iter()
        .map(|series| make_windows(series, &config.window, &scaler))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge(sets)?;
    if merged.is_empty() {
        return Err(BacktestError::Config(
            "training inputs yield no samples".into(),
        ));
    }
    let (train_set, test_set) = split(&merged, ratio)?;
    let mut train_config = config.train.config;
    if let Some(seed) = seed_override {
        train_config.seed = seed;
    }
    let params = init_params(&config.model, train_config.seed)?;
    let (params, history) = train(params, &train_set, &test_set, &train_config)?;
    Ok(TrainArtifacts {
        params,
        scaler,
        history,
        train_set,
        test_set,
    })
}

/// Writes the training run directory: model file, scaler, loss history CSV,
/// dataset summary and manifest.
pub fn emit_train_artifacts(
    artifacts: &TrainArtifacts,
    run_dir: &Path,
    manifest: &Manifest,
) -> Result<(), BacktestError> {
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let model_path = run_dir.join("model.bin");
    let file = fs::File::create(&model_path).map_err(io_err(&model_path))?;
    save_params(&artifacts.params, file)?;

    let scaler_path = run_dir.join("scaler.json");
    fs::write(
        &scaler_path,
        serde_json::to_string_pretty(&artifacts.scaler)? + "\n",
    )
    .map_err(io_err(&scaler_path))?;

    let mut history = String::from("epoch,train_mse,val_mse\n");
    for row in &artifacts.history {
        history.push_str(&format!(
            "{},{},{}\n",
            row.epoch,
            row.train_mse,
            row.val_mse.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    let history_path = run_dir.join("loss_history.csv");
    fs::write(&history_path, history).map_err(io_err(&history_path))?;

    let summary_path = run_dir.join("dataset_summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "train": artifacts.train_set.summary(),
            "test": artifacts.test_set.summary(),
        }))? + "\n",
    )
    .map_err(io_err(&summary_path))?;

    let manifest_path = run_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(manifest)? + "\n",
    )
    .map_err(io_err(&manifest_path))?;
    Ok(())
}
