//! Stacked autoregressive price rollout and forecast metrics.
//!
//! Each rollout step predicts the next close from the last `lookback` rows,
//! synthesizes the next row (flat OHLC at the predicted price, trailing-mean
//! volume, recurrence-updated RSI/EMA) and feeds it back in. The synthesis is
//! causal and deterministic, so a rollout of `h+k` steps extends a rollout of
//! `h` steps exactly.
//!
//! Prediction CSV format: header `Date,Price`, minute timestamps, prices at
//! six decimals.

use std::collections::VecDeque;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetError, Scaler, WindowSpec};
use crate::marketdata::{Bar, BarSeries, IndicatorParams, TIME_FORMAT};
use crate::model::{loss_mse, ModelError, Predictor};
use crate::{dataset, marketdata};

pub const PREDICTION_CSV_HEADER: &str = "Date,Price";

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("seed series is not enriched")]
    NotEnriched,
    #[error("insufficient seed history: need {needed} defined rows, got {got}")]
    InsufficientSeed { needed: usize, got: usize },
    #[error("non-finite or non-positive prediction at {at}")]
    NonFinitePrediction { at: NaiveDateTime },
    #[error("bar at {0} does not advance the series")]
    NonMonotonicBar(NaiveDateTime),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("length mismatch: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("actual value at index {0} is zero; MAPE undefined")]
    ZeroActual(usize),
    #[error("invalid prediction frame: {0}")]
    InvalidFrame(String),
    #[error("malformed prediction row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Time-ordered (timestamp, predicted price) pairs at one-minute spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFrame {
    entries: Vec<(NaiveDateTime, f64)>,
}

impl PredictionFrame {
    pub fn new(entries: Vec<(NaiveDateTime, f64)>) -> Result<Self, ForecastError> {
        for (i, (ts, price)) in entries.iter().enumerate() {
            if !(price.is_finite() && *price > 0.0) {
                return Err(ForecastError::InvalidFrame(format!(
                    "price {price} at {ts} is not finite and positive"
                )));
            }
            if i > 0 {
                let prev = entries[i - 1].0;
                if *ts != prev + chrono::Duration::minutes(1) {
                    return Err(ForecastError::InvalidFrame(format!(
                        "entry at {ts} does not follow {prev} by one minute"
                    )));
                }
            }
        }
        Ok(PredictionFrame { entries })
    }

    pub fn empty() -> Self {
        PredictionFrame { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(NaiveDateTime, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_time(&self) -> Option<NaiveDateTime> {
        self.entries.first().map(|(t, _)| *t)
    }

    pub fn last_time(&self) -> Option<NaiveDateTime> {
        self.entries.last().map(|(t, _)| *t)
    }

    pub fn covers(&self, ts: NaiveDateTime) -> bool {
        self.price_at(ts).is_some()
    }

    pub fn price_at(&self, ts: NaiveDateTime) -> Option<f64> {
        self.entries
            .binary_search_by_key(&ts, |(t, _)| *t)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// Rollout length and the trailing window for synthetic volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub synthetic_volume_window: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 0,
            synthetic_volume_window: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub frame: PredictionFrame,
    /// Set when a non-finite prediction aborted the rollout early.
    pub truncated: bool,
}

/// Incremental rollout state: the last `lookback` raw feature rows plus the
/// smoothing-recurrence state needed to extend RSI/EMA one close at a time.
///
/// The state can also absorb real bars ([`RolloutState::push_real_bar`]),
/// which is how the backtest harness refreshes its seed window each minute.
#[derive(Debug, Clone)]
pub struct RolloutState {
    spec: WindowSpec,
    scaler: Scaler,
    ind: IndicatorParams,
    rows: VecDeque<[f64; 7]>,
    volumes: VecDeque<f64>,
    volume_window: usize,
    last_time: NaiveDateTime,
    last_close: f64,
    smma_u: f64,
    smma_d: f64,
    ema: f64,
}

impl RolloutState {
    /// Builds the state from an enriched series, replaying the indicator
    /// recurrences over the full close history so incremental updates agree
    /// with a fresh recomputation exactly.
    pub fn from_series(
        series: &BarSeries,
        scaler: &Scaler,
        spec: &WindowSpec,
        volume_window: usize,
    ) -> Result<Self, ForecastError> {
        spec.validate().map_err(ForecastError::Dataset)?;
        let ind = *series.indicator_params().ok_or(ForecastError::NotEnriched)?;
        let rsi_col = series.rsi().ok_or(ForecastError::NotEnriched)?;
        let ema_col = series.ema().ok_or(ForecastError::NotEnriched)?;
        if volume_window == 0 {
            return Err(ForecastError::InvalidFrame(
                "synthetic_volume_window must be positive".into(),
            ));
        }
        let bars = series.bars();
        let mut rows: Vec<(NaiveDateTime, [f64; 7])> = Vec::new();
        for (i, bar) in bars.iter().enumerate() {
            if let (Some(r), Some(e)) = (rsi_col[i], ema_col[i]) {
                rows.push((
                    bar.time,
                    [bar.open, bar.high, bar.low, bar.close, bar.volume, r, e],
                ));
            }
        }
        if rows.len() < spec.lookback {
            return Err(ForecastError::InsufficientSeed {
                needed: spec.lookback,
                got: rows.len(),
            });
        }
        // Replay the up/down smoothing over all closes to recover the RSI
        // recurrence state at the series end.
        let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
        let n = ind.rsi_period;
        let ups: Vec<f64> = closes.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let downs: Vec<f64> = closes.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
        let mut smma_u = ups[..n].iter().sum::<f64>() / n as f64;
        let mut smma_d = downs[..n].iter().sum::<f64>() / n as f64;
        for t in n..ups.len() {
            smma_u = (smma_u * (n as f64 - 1.0) + ups[t]) / n as f64;
            smma_d = (smma_d * (n as f64 - 1.0) + downs[t]) / n as f64;
        }
        let ema = ema_col
            .iter()
            .rev()
            .find_map(|v| *v)
            .expect("enriched series has a defined EMA");
        let tail = rows.split_off(rows.len() - spec.lookback);
        let volumes: VecDeque<f64> = bars
            .iter()
            .rev()
            .take(volume_window)
            .rev()
            .map(|b| b.volume)
            .collect();
        Ok(RolloutState {
            spec: *spec,
            scaler: scaler.clone(),
            ind,
            last_time: tail.last().unwrap().0,
            rows: tail.into_iter().map(|(_, r)| r).collect(),
            volumes,
            volume_window,
            last_close: *closes.last().unwrap(),
            smma_u,
            smma_d,
            ema,
        })
    }

    pub fn last_time(&self) -> NaiveDateTime {
        self.last_time
    }

    /// The newest raw feature row (open, high, low, close, volume, rsi, ema).
    pub fn last_row(&self) -> &[f64; 7] {
        self.rows.back().expect("state always holds lookback rows")
    }

    fn advance(&mut self, time: NaiveDateTime, row: [f64; 7]) {
        let (u, d) = marketdata::rsi_step(
            self.smma_u,
            self.smma_d,
            self.last_close,
            row[3],
            self.ind.rsi_period,
        );
        self.smma_u = u;
        self.smma_d = d;
        let k = self.ind.ema_factor();
        self.ema = row[3] * k + self.ema * (1.0 - k);
        let mut row = row;
        row[5] = marketdata::rsi_value(self.smma_u, self.smma_d);
        row[6] = self.ema;
        self.last_close = row[3];
        self.last_time = time;
        self.volumes.push_back(row[4]);
        while self.volumes.len() > self.volume_window {
            self.volumes.pop_front();
        }
        self.rows.push_back(row);
        while self.rows.len() > self.spec.lookback {
            self.rows.pop_front();
        }
    }

    /// Feeds an observed bar into the window, updating indicators
    /// incrementally.
    pub fn push_real_bar(&mut self, bar: &Bar) -> Result<(), ForecastError> {
        if bar.time <= self.last_time {
            return Err(ForecastError::NonMonotonicBar(bar.time));
        }
        self.advance(
            bar.time,
            [bar.open, bar.high, bar.low, bar.close, bar.volume, 0.0, 0.0],
        );
        Ok(())
    }

    fn window_matrix(&self) -> Vec<f64> {
        let f = self.spec.feature_count;
        let mut x = Vec::with_capacity(self.spec.lookback * f);
        for row in &self.rows {
            for (c, &v) in row[..f].iter().enumerate() {
                x.push(self.scaler.transform_value(c, v));
            }
        }
        x
    }

    /// Predicts the next close and appends the synthesized row.
    pub fn predict_step(
        &mut self,
        predictor: &dyn Predictor,
    ) -> Result<(NaiveDateTime, f64), ForecastError> {
        let x = self.window_matrix();
        let scaled = predictor.predict(&x, self.spec.lookback, self.spec.feature_count)?;
        let price = self
            .scaler
            .inverse_value(self.spec.target_column.index(), scaled);
        let time = self.last_time + chrono::Duration::minutes(1);
        if !(price.is_finite() && price > 0.0) {
            return Err(ForecastError::NonFinitePrediction { at: time });
        }
        let volume = self.volumes.iter().sum::<f64>() / self.volumes.len() as f64;
        self.advance(time, [price, price, price, price, volume, 0.0, 0.0]);
        Ok((time, price))
    }
}

/// Stacked rollout: `horizon` autoregressive steps from the series tail.
///
/// A non-finite (or non-positive) prediction stops early and returns the
/// partial frame with `truncated` set.
pub fn rollout(
    predictor: &dyn Predictor,
    seed_series: &BarSeries,
    scaler: &Scaler,
    spec: &WindowSpec,
    config: &RolloutConfig,
) -> Result<RolloutOutcome, ForecastError> {
    let mut state =
        RolloutState::from_series(seed_series, scaler, spec, config.synthetic_volume_window)?;
    let mut entries = Vec::with_capacity(config.horizon);
    let mut truncated = false;
    for _ in 0..config.horizon {
        match state.predict_step(predictor) {
            Ok(entry) => entries.push(entry),
            Err(ForecastError::NonFinitePrediction { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RolloutOutcome {
        frame: PredictionFrame::new(entries)?,
        truncated,
    })
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, ForecastError> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean absolute percentage error (as a fraction, not scaled by 100).
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, ForecastError> {
    check_lengths(actual, predicted)?;
    let mut sum = 0.0;
    for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if *a == 0.0 {
            return Err(ForecastError::ZeroActual(i));
        }
        sum += (a - p).abs() / a.abs();
    }
    Ok(sum / actual.len() as f64)
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<(), ForecastError> {
    if actual.is_empty() || predicted.is_empty() {
        return Err(ForecastError::EmptyInput);
    }
    if actual.len() != predicted.len() {
        return Err(ForecastError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    Ok(())
}

/// One-step-ahead evaluation metrics. MSE is in scaled units; MAE and MAPE
/// are in raw price units after inverse scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub test_mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub count: usize,
}

/// Runs non-stacked one-step predictions over a test set.
pub fn evaluate(
    predictor: &dyn Predictor,
    test_set: &dataset::SampleSet,
    scaler: &Scaler,
) -> Result<MetricsReport, ForecastError> {
    if test_set.is_empty() {
        return Err(ForecastError::EmptyInput);
    }
    let spec = &test_set.spec;
    let target = spec.target_column.index();
    let mut preds_scaled = Vec::with_capacity(test_set.len());
    let mut targets_scaled = Vec::with_capacity(test_set.len());
    let mut preds_raw = Vec::with_capacity(test_set.len());
    let mut actual_raw = Vec::with_capacity(test_set.len());
    for s in &test_set.samples {
        let p = predictor.predict(&s.x, spec.lookback, spec.feature_count)?;
        preds_scaled.push(p);
        targets_scaled.push(s.y);
        preds_raw.push(scaler.inverse_value(target, p));
        actual_raw.push(scaler.inverse_value(target, s.y));
    }
    Ok(MetricsReport {
        test_mse: loss_mse(&preds_scaled, &targets_scaled)?,
        mae: mae(&actual_raw, &preds_raw)?,
        mape: mape(&actual_raw, &preds_raw)?,
        count: test_set.len(),
    })
}

/// Writes the `Date,Price` CSV at six-decimal precision.
pub fn write_frame_csv<W: Write>(frame: &PredictionFrame, mut sink: W) -> Result<(), ForecastError> {
    writeln!(sink, "{PREDICTION_CSV_HEADER}")?;
    for (ts, price) in frame.entries() {
        writeln!(sink, "{},{:.6}", ts.format(TIME_FORMAT), price)?;
    }
    Ok(())
}

/// Reads `Date,Price` rows without enforcing frame invariants. The backtest
/// harness uses this to absorb feeds with calendar gaps.
pub fn read_frame_entries<R: Read>(
    source: R,
) -> Result<Vec<(NaiveDateTime, f64)>, ForecastError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| ForecastError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() != 2 || !fields[0].eq_ignore_ascii_case("date") {
        return Err(ForecastError::MalformedRow {
            line: 1,
            reason: format!(
                "expected header `{PREDICTION_CSV_HEADER}`, got `{}`",
                fields.join(",")
            ),
        });
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| ForecastError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let ts = NaiveDateTime::parse_from_str(&record[0], TIME_FORMAT).map_err(|e| {
            ForecastError::MalformedRow {
                line,
                reason: format!("bad timestamp `{}`: {e}", &record[0]),
            }
        })?;
        let price: f64 = record[1].parse().map_err(|e| ForecastError::MalformedRow {
            line,
            reason: format!("bad price `{}`: {e}", &record[1]),
        })?;
        entries.push((ts, price));
    }
    Ok(entries)
}

/// Reads a prediction CSV into a validated frame.
pub fn read_frame_csv<R: Read>(source: R) -> Result<PredictionFrame, ForecastError> {
    PredictionFrame::new(read_frame_entries(source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fit_scaler, FeatureColumn, Sample, SampleSet};
    use crate::marketdata::Timeframe;
    use crate::model::{init_params, ModelConfig};

    fn ts(minute: i64) -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2024-09-02 00:00:00", TIME_FORMAT).unwrap()
            + chrono::Duration::minutes(minute)
    }

    fn seed_series(len: usize) -> BarSeries {
        let bars: Vec<Bar> = (0..len)
            .map(|i| {
                let c = 100.0 + (i as f64 * 0.21).sin() * 4.0;
                Bar {
                    time: ts(i as i64),
                    open: c - 0.05,
                    high: c + 0.1,
                    low: c - 0.1,
                    close: c,
                    volume: 40.0 + (i % 9) as f64,
                }
            })
            .collect();
        BarSeries::new(Timeframe::new(1).unwrap(), bars)
            .unwrap()
            .enrich(&IndicatorParams::default())
            .unwrap()
    }

    fn small_spec() -> WindowSpec {
        WindowSpec {
            lookback: 8,
            ..Default::default()
        }
    }

    /// Predicts the scaled close of the last window row, whatever it is.
    struct LastCloseStub;

    impl Predictor for LastCloseStub {
        fn predict(&self, x: &[f64], rows: usize, cols: usize) -> Result<f64, ModelError> {
            Ok(x[(rows - 1) * cols + FeatureColumn::Close.index()])
        }
    }

    struct ConstStub(f64);

    impl Predictor for ConstStub {
        fn predict(&self, _: &[f64], _: usize, _: usize) -> Result<f64, ModelError> {
            Ok(self.0)
        }
    }

    #[test]
    fn rollout_horizon_zero_is_empty() {
        let series = seed_series(60);
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();
        let out = rollout(&LastCloseStub, &series, &scaler, &spec, &RolloutConfig::default())
            .unwrap();
        assert!(out.frame.is_empty());
        assert!(!out.truncated);
    }

    #[test]
    fn rollout_last_close_stub_is_constant() {
        let series = seed_series(60);
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();
        let cfg = RolloutConfig {
            horizon: 40,
            ..Default::default()
        };
        let out = rollout(&LastCloseStub, &series, &scaler, &spec, &cfg).unwrap();
        assert_eq!(out.frame.len(), 40);
        let last_bar = series.bars().last().unwrap();
        for (i, (t, p)) in out.frame.entries().iter().enumerate() {
            assert_eq!(*t, last_bar.time + chrono::Duration::minutes(i as i64 + 1));
            assert!(
                (p - last_bar.close).abs() < 1e-9,
                "step {i}: {p} vs {}",
                last_bar.close
            );
        }
    }

    #[test]
    fn rollout_is_deterministic_and_prefix_consistent() {
        let series = seed_series(60);
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();
        let cfg_model = ModelConfig {
            input_features: 7,
            lstm1_units: 4,
            lstm2_units: 3,
            lookback: 8,
        };
        let params = init_params(&cfg_model, 3).unwrap();
        let run = |h: usize| {
            rollout(
                &params,
                &series,
                &scaler,
                &spec,
                &RolloutConfig {
                    horizon: h,
                    ..Default::default()
                },
            )
            .unwrap()
            .frame
        };
        let a = run(25);
        let b = run(25);
        assert_eq!(a, b);
        let long = run(40);
        assert_eq!(&long.entries()[..25], a.entries());
    }

    #[test]
    fn rollout_incremental_indicators_match_full_recomputation() {
        let series = seed_series(80);
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();
        let mut state = RolloutState::from_series(&series, &scaler, &spec, 20).unwrap();
        let mut synth_bars = series.bars().to_vec();
        let mut incremental = Vec::new();
        for _ in 0..30 {
            let (time, price) = state.predict_step(&LastCloseStub).unwrap();
            let row = state.last_row();
            incremental.push((row[5], row[6]));
            synth_bars.push(Bar {
                time,
                open: price,
                high: price,
                low: price,
                close: price,
                volume: row[4],
            });
        }
        let full = BarSeries::new(Timeframe::new(1).unwrap(), synth_bars)
            .unwrap()
            .enrich(&IndicatorParams::default())
            .unwrap();
        let rsi = full.rsi().unwrap();
        let ema = full.ema().unwrap();
        let offset = series.len();
        for (i, (inc_rsi, inc_ema)) in incremental.iter().enumerate() {
            let fr = rsi[offset + i].unwrap();
            let fe = ema[offset + i].unwrap();
            assert!((inc_rsi - fr).abs() < 1e-9, "rsi step {i}: {inc_rsi} vs {fr}");
            assert!((inc_ema - fe).abs() < 1e-9, "ema step {i}: {inc_ema} vs {fe}");
        }
    }

    #[test]
    fn rollout_truncates_on_bad_prediction() {
        let series = seed_series(60);
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();

        struct ExplodingStub;
        impl Predictor for ExplodingStub {
            fn predict(&self, _: &[f64], _: usize, _: usize) -> Result<f64, ModelError> {
                Ok(f64::NAN)
            }
        }
        let cfg = RolloutConfig {
            horizon: 10,
            ..Default::default()
        };
        let out = rollout(&ExplodingStub, &series, &scaler, &spec, &cfg).unwrap();
        assert!(out.truncated);
        assert!(out.frame.is_empty());
    }

    #[test]
    fn rollout_requires_enough_seed_rows() {
        let series = seed_series(20); // only 6 defined rows after warmup
        let spec = small_spec();
        let scaler = fit_scaler(&series, &spec).unwrap();
        let err = rollout(&LastCloseStub, &series, &scaler, &spec, &RolloutConfig::default())
            .unwrap_err();
        assert!(matches!(err, ForecastError::InsufficientSeed { .. }));
    }

    #[test]
    fn mae_mape_arithmetic() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);

        assert_eq!(mae(&[100.0], &[110.0]).unwrap(), 10.0);
        assert!((mape(&[100.0], &[110.0]).unwrap() - 0.1).abs() < 1e-15);

        let actual = [1.0, 2.0, 3.0];
        let predicted = [2.0, 2.0, 2.0];
        let expect_mae = (1.0 + 0.0 + 1.0) / 3.0;
        let expect_mape = (1.0 / 1.0 + 0.0 / 2.0 + 1.0 / 3.0) / 3.0;
        assert_eq!(mae(&actual, &predicted).unwrap(), expect_mae);
        assert_eq!(mape(&actual, &predicted).unwrap(), expect_mape);
        assert!((mape(&actual, &predicted).unwrap() - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn mae_mape_error_paths() {
        assert!(matches!(mae(&[], &[]), Err(ForecastError::EmptyInput)));
        assert!(matches!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(ForecastError::LengthMismatch { .. })
        ));
        assert!(matches!(
            mape(&[0.0, 1.0], &[1.0, 1.0]),
            Err(ForecastError::ZeroActual(0))
        ));
    }

    fn toy_set(ys: &[f64]) -> (SampleSet, Scaler) {
        // Identity scaler: column bounds [0, 1] on every feature.
        let scaler = Scaler::fit(&[vec![0.0; 7], vec![1.0; 7]], 7).unwrap();
        let spec = WindowSpec {
            lookback: 2,
            ..Default::default()
        };
        let samples = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| Sample {
                x: vec![0.5; 14],
                y,
                target_time: ts(i as i64),
                timeframe_minutes: 1,
            })
            .collect();
        (
            SampleSet {
                samples,
                spec,
                scaler: scaler.clone(),
                dropped_undefined_rows: 0,
                short_series: 0,
            },
            scaler,
        )
    }

    #[test]
    fn evaluate_perfect_stub_is_zero() {
        let (set, scaler) = toy_set(&[0.25, 0.25, 0.25]);
        let report = evaluate(&ConstStub(0.25), &set, &scaler).unwrap();
        assert_eq!(report.test_mse, 0.0);
        assert_eq!(report.mae, 0.0);
        assert_eq!(report.mape, 0.0);
        assert_eq!(report.count, 3);
    }

    #[test]
    fn evaluate_constant_stub_hand_arithmetic() {
        let (set, scaler) = toy_set(&[0.2, 0.4]);
        let report = evaluate(&ConstStub(0.3), &set, &scaler).unwrap();
        assert!((report.test_mse - 0.01).abs() < 1e-15);
        assert!((report.mae - 0.1).abs() < 1e-15);
        // (0.1/0.2 + 0.1/0.4) / 2
        assert!((report.mape - 0.375).abs() < 1e-12);
    }

    #[test]
    fn evaluate_is_order_invariant() {
        let (mut set, scaler) = toy_set(&[0.2, 0.4, 0.9]);
        let a = evaluate(&ConstStub(0.3), &set, &scaler).unwrap();
        set.samples.reverse();
        let b = evaluate(&ConstStub(0.3), &set, &scaler).unwrap();
        assert!((a.mae - b.mae).abs() < 1e-15);
        assert!((a.test_mse - b.test_mse).abs() < 1e-15);
        assert!((a.mape - b.mape).abs() < 1e-15);
    }

    #[test]
    fn frame_csv_round_trip_is_stable_at_six_decimals() {
        let entries: Vec<(NaiveDateTime, f64)> = (0..12)
            .map(|i| (ts(i), 2318.995605 + i as f64 * 0.331))
            .collect();
        let frame = PredictionFrame::new(entries).unwrap();
        let mut buf = Vec::new();
        write_frame_csv(&frame, &mut buf).unwrap();
        let reread = read_frame_csv(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        write_frame_csv(&reread, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn frame_rejects_gaps_and_bad_prices() {
        let gap = vec![(ts(0), 1.0), (ts(2), 1.0)];
        assert!(matches!(
            PredictionFrame::new(gap),
            Err(ForecastError::InvalidFrame(_))
        ));
        let negative = vec![(ts(0), -1.0)];
        assert!(matches!(
            PredictionFrame::new(negative),
            Err(ForecastError::InvalidFrame(_))
        ));
    }
}
