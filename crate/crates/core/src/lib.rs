//! Achilles: a desk-scale algorithmic-trading laboratory.
//!
//! The crate wires a complete minute-bar pipeline: OHLCV ingestion with
//! RSI/EMA enrichment ([`marketdata`]), sliding-window supervised dataset
//! construction ([`dataset`]), a from-scratch two-layer LSTM trained by
//! mini-batch gradient descent ([`model`]), stacked autoregressive price
//! rollouts and forecast metrics ([`forecast`]), news-sentiment aggregation
//! behind a provider interface ([`sentiment`]), a deterministic paper broker
//! ([`broker`]), the dual-loop trading strategy ([`strategy`]) and a
//! simulated-clock backtest harness with report emission ([`backtest`]).
//!
//! Everything is seed-deterministic: two runs with the same inputs and seeds
//! produce byte-identical outputs.

pub mod backtest;
pub mod broker;
pub mod dataset;
pub mod forecast;
pub mod marketdata;
pub mod model;
pub mod sentiment;
pub mod strategy;

pub use backtest::{run_backtest, AppConfig, BacktestConfig, BacktestReport};
pub use broker::{AccountState, Order, Side, SizingInputs};
pub use dataset::{Sample, SampleSet, Scaler, WindowSpec};
pub use forecast::{PredictionFrame, RolloutConfig};
pub use marketdata::{Bar, BarSeries, IndicatorParams, Timeframe};
pub use model::{ModelConfig, ModelParams, Predictor, TrainConfig};
pub use sentiment::{SentimentLabel, SentimentSnapshot, SourceReading};
pub use strategy::{Action, Bot, BotConfig};
