//! Minute/5-minute/15-minute OHLCV bars and the RSI/EMA indicator columns.
//!
//! Bar CSV format: header `Time,Open,High,Low,Close,Volume`, timestamps as
//! `YYYY-MM-DD HH:MM:SS`, prices as decimal text. The enriched variant
//! appends `,RSI,EMA`; cells before an indicator's seed index are empty.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BAR_CSV_HEADER: &str = "Time,Open,High,Low,Close,Volume";
pub const ENRICHED_CSV_HEADER: &str = "Time,Open,High,Low,Close,Volume,RSI,EMA";
pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("bad CSV header: expected `{expected}`, got `{got}`")]
    BadHeader { expected: String, got: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(NaiveDateTime),
    #[error("insufficient history: need {needed} values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("invalid indicator parameters: {0}")]
    InvalidParams(String),
    #[error("series is not enriched with indicator columns")]
    NotEnriched,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Bar interval in minutes (1, 5 and 15 in the training corpus).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Timeframe(u32);

impl Timeframe {
    pub fn new(minutes: u32) -> Result<Self, MarketDataError> {
        if minutes == 0 {
            return Err(MarketDataError::InvalidParams(
                "timeframe minutes must be positive".into(),
            ));
        }
        Ok(Timeframe(minutes))
    }

    pub fn minutes(&self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for Timeframe {
    type Error = MarketDataError;
    fn try_from(m: u32) -> Result<Self, Self::Error> {
        Timeframe::new(m)
    }
}

impl From<Timeframe> for u32 {
    fn from(tf: Timeframe) -> u32 {
        tf.0
    }
}

/// One OHLCV record at minute resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub time: NaiveDateTime,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Whether `low <= min(open, close)` and `high >= max(open, close)`.
    ///
    /// Some upstream feeds ship rows where the high/low columns are
    /// inconsistent with open/close. Ingestion tolerates such rows (they are
    /// counted, not rejected) so real exports still load.
    pub fn has_consistent_range(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

/// Which EMA smoothing factor to use.
///
/// `Paper` uses `k = 2/(X-1)`, `Standard` the conventional `k = 2/(X+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmaVariant {
    #[default]
    Paper,
    Standard,
}

/// RSI/EMA configuration. Defaults: period 14, length 14, paper variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorParams {
    pub rsi_period: usize,
    pub ema_length: usize,
    pub ema_variant: EmaVariant,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        IndicatorParams {
            rsi_period: 14,
            ema_length: 14,
            ema_variant: EmaVariant::Paper,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<(), MarketDataError> {
        if self.rsi_period < 2 {
            return Err(MarketDataError::InvalidParams(format!(
                "rsi_period must be >= 2, got {}",
                self.rsi_period
            )));
        }
        let min_len = match self.ema_variant {
            // k = 2/(X-1) needs X >= 3 so that k <= 1.
            EmaVariant::Paper => 3,
            EmaVariant::Standard => 2,
        };
        if self.ema_length < min_len {
            return Err(MarketDataError::InvalidParams(format!(
                "ema_length must be >= {min_len} for {:?} variant, got {}",
                self.ema_variant, self.ema_length
            )));
        }
        Ok(())
    }

    /// The EMA smoothing factor `k`.
    pub fn ema_factor(&self) -> f64 {
        match self.ema_variant {
            EmaVariant::Paper => 2.0 / (self.ema_length as f64 - 1.0),
            EmaVariant::Standard => 2.0 / (self.ema_length as f64 + 1.0),
        }
    }
}

/// A time-ordered bar sequence with optional aligned indicator columns.
///
/// Indicator cells before the smoothing seed are `None`; downstream dataset
/// construction drops those rows rather than training on fabricated values.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    timeframe: Timeframe,
    bars: Vec<Bar>,
    rsi: Option<Vec<Option<f64>>>,
    ema: Option<Vec<Option<f64>>>,
    indicator_params: Option<IndicatorParams>,
}

impl BarSeries {
    /// Builds a series from bars already sorted strictly by time.
    pub fn new(timeframe: Timeframe, bars: Vec<Bar>) -> Result<Self, MarketDataError> {
        for pair in bars.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(MarketDataError::DuplicateTimestamp(pair[1].time));
            }
        }
        Ok(BarSeries {
            timeframe,
            bars,
            rsi: None,
            ema: None,
            indicator_params: None,
        })
    }

    pub fn timeframe(&self) -> Timeframe {
        self.timeframe
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn rsi(&self) -> Option<&[Option<f64>]> {
        self.rsi.as_deref()
    }

    pub fn ema(&self) -> Option<&[Option<f64>]> {
        self.ema.as_deref()
    }

    pub fn indicator_params(&self) -> Option<&IndicatorParams> {
        self.indicator_params.as_ref()
    }

    pub fn is_enriched(&self) -> bool {
        self.rsi.is_some() && self.ema.is_some()
    }

    /// Number of rows whose high/low columns contradict open/close.
    pub fn range_violations(&self) -> usize {
        self.bars.iter().filter(|b| !b.has_consistent_range()).count()
    }

    /// Computes RSI and EMA columns and attaches them to the series.
    pub fn enrich(mut self, params: &IndicatorParams) -> Result<Self, MarketDataError> {
        self.rsi = Some(rsi(&self, params)?);
        self.ema = Some(ema(&self, params)?);
        self.indicator_params = Some(*params);
        Ok(self)
    }

    /// Attaches externally supplied indicator columns (used by the enriched
    /// CSV loader, where the generating parameters are unknown).
    pub fn with_columns(
        mut self,
        rsi: Vec<Option<f64>>,
        ema: Vec<Option<f64>>,
    ) -> Result<Self, MarketDataError> {
        if rsi.len() != self.bars.len() || ema.len() != self.bars.len() {
            return Err(MarketDataError::InvalidParams(
                "indicator columns must match bar count".into(),
            ));
        }
        self.rsi = Some(rsi);
        self.ema = Some(ema);
        Ok(self)
    }

    /// Index of the first row where both indicator columns are defined.
    pub fn first_defined_row(&self) -> Option<usize> {
        let rsi = self.rsi.as_ref()?;
        let ema = self.ema.as_ref()?;
        (0..self.bars.len()).find(|&i| rsi[i].is_some() && ema[i].is_some())
    }
}

fn parse_time(s: &str, line: usize) -> Result<NaiveDateTime, MarketDataError> {
    NaiveDateTime::parse_from_str(s.trim(), TIME_FORMAT).map_err(|e| {
        MarketDataError::MalformedRow {
            line,
            reason: format!("bad timestamp `{s}`: {e}"),
        }
    })
}

fn parse_price(s: &str, field: &str, line: usize) -> Result<f64, MarketDataError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|e| MarketDataError::MalformedRow {
            line,
            reason: format!("bad {field} `{s}`: {e}"),
        })?;
    if !v.is_finite() {
        return Err(MarketDataError::MalformedRow {
            line,
            reason: format!("non-finite {field} `{s}`"),
        });
    }
    Ok(v)
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), MarketDataError> {
    let got: Vec<&str> = record.iter().map(|f| f.trim()).collect();
    if got.len() != expected.len()
        || !got
            .iter()
            .zip(expected)
            .all(|(g, e)| g.eq_ignore_ascii_case(e))
    {
        return Err(MarketDataError::BadHeader {
            expected: expected.join(","),
            got: got.join(","),
        });
    }
    Ok(())
}

fn read_records<R: Read>(
    source: R,
    expected_header: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| MarketDataError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    check_header(&header, expected_header)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after header
        let record = record.map_err(|e| MarketDataError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        rows.push((line, record));
    }
    Ok(rows)
}

fn bar_from_fields(
    fields: &csv::StringRecord,
    line: usize,
) -> Result<Bar, MarketDataError> {
    let time = parse_time(&fields[0], line)?;
    let open = parse_price(&fields[1], "open", line)?;
    let high = parse_price(&fields[2], "high", line)?;
    let low = parse_price(&fields[3], "low", line)?;
    let close = parse_price(&fields[4], "close", line)?;
    let volume = parse_price(&fields[5], "volume", line)?;
    if volume < 0.0 {
        return Err(MarketDataError::MalformedRow {
            line,
            reason: format!("negative volume {volume}"),
        });
    }
    Ok(Bar {
        time,
        open,
        high,
        low,
        close,
        volume,
    })
}

/// Loads a bar CSV, sorts rows by time and rejects duplicate timestamps.
pub fn load_bars<R: Read>(source: R, timeframe: Timeframe) -> Result<BarSeries, MarketDataError> {
    let rows = read_records(source, &["Time", "Open", "High", "Low", "Close", "Volume"])?;
    let mut bars = Vec::with_capacity(rows.len());
    for (line, record) in &rows {
        bars.push(bar_from_fields(record, *line)?);
    }
    bars.sort_by_key(|b| b.time);
    BarSeries::new(timeframe, bars)
}

fn parse_optional(
    s: &str,
    field: &str,
    line: usize,
) -> Result<Option<f64>, MarketDataError> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_price(s, field, line).map(Some)
    }
}

/// Loads an enriched (8 column) bar CSV. Empty RSI/EMA cells map to `None`.
pub fn load_enriched<R: Read>(
    source: R,
    timeframe: Timeframe,
) -> Result<BarSeries, MarketDataError> {
    let rows = read_records(
        source,
        &["Time", "Open", "High", "Low", "Close", "Volume", "RSI", "EMA"],
    )?;
    let mut triples = Vec::with_capacity(rows.len());
    for (line, record) in &rows {
        let bar = bar_from_fields(record, *line)?;
        let rsi = parse_optional(&record[6], "rsi", *line)?;
        let ema = parse_optional(&record[7], "ema", *line)?;
        triples.push((bar, rsi, ema));
    }
    triples.sort_by_key(|(b, _, _)| b.time);
    let rsi = triples.iter().map(|(_, r, _)| *r).collect();
    let ema = triples.iter().map(|(_, _, e)| *e).collect();
    let bars = triples.into_iter().map(|(b, _, _)| b).collect();
    BarSeries::new(timeframe, bars)?.with_columns(rsi, ema)
}

fn fmt_optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the enriched CSV layout. Floats use shortest round-trip formatting
/// so a write/load cycle reproduces the in-memory series exactly.
pub fn write_enriched_csv<W: Write>(
    series: &BarSeries,
    mut sink: W,
) -> Result<(), MarketDataError> {
    let rsi = series.rsi().ok_or(MarketDataError::NotEnriched)?;
    let ema = series.ema().ok_or(MarketDataError::NotEnriched)?;
    writeln!(sink, "{ENRICHED_CSV_HEADER}")?;
    for (i, bar) in series.bars().iter().enumerate() {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            bar.time.format(TIME_FORMAT),
            bar.open,
            bar.high,
            bar.low,
            bar.close,
            bar.volume,
            fmt_optional(rsi[i]),
            fmt_optional(ema[i]),
        )?;
    }
    Ok(())
}

/// Smoothed (Wilder's) moving average.
///
/// The element at index `n-1` seeds the recurrence with the simple average of
/// the first `n` values; afterwards `smma(t) = (smma(t-1)*(n-1) + v(t)) / n`.
/// Indices before the seed are `None`.
pub fn smma(values: &[f64], n: usize) -> Result<Vec<Option<f64>>, MarketDataError> {
    if n == 0 {
        return Err(MarketDataError::InvalidParams("smma period must be positive".into()));
    }
    if values.len() < n {
        return Err(MarketDataError::InsufficientHistory {
            needed: n,
            got: values.len(),
        });
    }
    let mut out = vec![None; values.len()];
    let mut acc = values[..n].iter().sum::<f64>() / n as f64;
    out[n - 1] = Some(acc);
    for (t, &v) in values.iter().enumerate().skip(n) {
        acc = (acc * (n as f64 - 1.0) + v) / n as f64;
        out[t] = Some(acc);
    }
    Ok(out)
}

/// One incremental RSI smoothing step. Returns the updated `(smma_u, smma_d)`
/// state for a new close, given the previous close.
pub fn rsi_step(
    smma_u: f64,
    smma_d: f64,
    prev_close: f64,
    close: f64,
    period: usize,
) -> (f64, f64) {
    let n = period as f64;
    let up = (close - prev_close).max(0.0);
    let down = (prev_close - close).max(0.0);
    (
        (smma_u * (n - 1.0) + up) / n,
        (smma_d * (n - 1.0) + down) / n,
    )
}

/// Maps smoothed up/down averages to the bounded [0, 100] index.
///
/// A perfectly flat market (both averages zero) maps to the neutral 50.
pub fn rsi_value(smma_u: f64, smma_d: f64) -> f64 {
    if smma_d == 0.0 {
        if smma_u == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 * smma_u / (smma_u + smma_d)
    }
}

/// Relative Strength Index over the series closes, aligned to the bars.
///
/// Defined from bar index `rsi_period` onward; earlier cells are `None`.
pub fn rsi(
    series: &BarSeries,
    params: &IndicatorParams,
) -> Result<Vec<Option<f64>>, MarketDataError> {
    params.validate()?;
    let n = params.rsi_period;
    let closes = series.closes();
    if closes.len() < n + 1 {
        return Err(MarketDataError::InsufficientHistory {
            needed: n + 1,
            got: closes.len(),
        });
    }
    let ups: Vec<f64> = closes.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let downs: Vec<f64> = closes.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let smma_u = smma(&ups, n)?;
    let smma_d = smma(&downs, n)?;
    let mut out = vec![None; closes.len()];
    for t in 0..ups.len() {
        if let (Some(u), Some(d)) = (smma_u[t], smma_d[t]) {
            // The diff at index t belongs to bar t+1.
            out[t + 1] = Some(rsi_value(u, d));
        }
    }
    Ok(out)
}

/// Exponential moving average over the series closes, aligned to the bars.
///
/// Seeded at index `ema_length-1` with the simple average of the first
/// `ema_length` closes, then `EMA(t) = close(t)*k + EMA(t-1)*(1-k)`.
pub fn ema(
    series: &BarSeries,
    params: &IndicatorParams,
) -> Result<Vec<Option<f64>>, MarketDataError> {
    params.validate()?;
    let x = params.ema_length;
    let closes = series.closes();
    if closes.len() < x {
        return Err(MarketDataError::InsufficientHistory {
            needed: x,
            got: closes.len(),
        });
    }
    let k = params.ema_factor();
    let mut out = vec![None; closes.len()];
    let mut acc = closes[..x].iter().sum::<f64>() / x as f64;
    out[x - 1] = Some(acc);
    for (t, &c) in closes.iter().enumerate().skip(x) {
        acc = c * k + acc * (1.0 - k);
        out[t] = Some(acc);
    }
    Ok(out)
}
