//! Supervised dataset construction: min-max scaling and sliding windows.
//!
//! An enriched bar series becomes rows of features in Table-1 order (open,
//! high, low, close, volume, rsi, ema). Rows with undefined indicator cells
//! are dropped, remaining rows slide into `(x, y)` pairs: `x` holds
//! `lookback` consecutive scaled rows and `y` the scaled target one row
//! later. Sets from different timeframes merge by concatenation; splits are
//! chronological so no future row leaks into training.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::BarSeries;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("series has no usable rows")]
    EmptySeries,
    #[error("series is not enriched but spec uses indicator columns")]
    MissingIndicators,
    #[error("window spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),
    #[error("split ratio must lie in (0,1), got {0}")]
    InvalidRatio(f64),
    #[error("sample set is empty")]
    EmptySet,
    #[error("scaler has {scaler} columns but spec expects {spec}")]
    ScalerMismatch { scaler: usize, spec: usize },
}

/// Feature columns in Table-1 order (everything except the timestamp).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureColumn {
    Open,
    High,
    Low,
    Close,
    Volume,
    Rsi,
    Ema,
}

impl FeatureColumn {
    pub const ALL: [FeatureColumn; 7] = [
        FeatureColumn::Open,
        FeatureColumn::High,
        FeatureColumn::Low,
        FeatureColumn::Close,
        FeatureColumn::Volume,
        FeatureColumn::Rsi,
        FeatureColumn::Ema,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).unwrap()
    }
}

/// Windowing parameters: `lookback` rows of `feature_count` columns predict
/// the target column of the next row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub lookback: usize,
    pub feature_count: usize,
    pub target_column: FeatureColumn,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            lookback: 120,
            feature_count: 7,
            target_column: FeatureColumn::Close,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.lookback == 0 {
            return Err(DatasetError::InvalidSpec("lookback must be >= 1".into()));
        }
        if self.feature_count == 0 || self.feature_count > FeatureColumn::ALL.len() {
            return Err(DatasetError::InvalidSpec(format!(
                "feature_count must be in 1..={}, got {}",
                FeatureColumn::ALL.len(),
                self.feature_count
            )));
        }
        if self.target_column.index() >= self.feature_count {
            return Err(DatasetError::InvalidSpec(format!(
                "target column {:?} is outside the first {} features",
                self.target_column, self.feature_count
            )));
        }
        Ok(())
    }
}

/// Per-column min/max fitted on training data.
///
/// `transform` maps the fitted range onto [0,1]; values outside the fitted
/// range map outside [0,1] and are intentionally not clipped. A degenerate
/// column (min == max) transforms to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>], columns: usize) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::EmptySeries);
        }
        let mut mins = vec![f64::INFINITY; columns];
        let mut maxs = vec![f64::NEG_INFINITY; columns];
        for row in rows {
            for c in 0..columns {
                mins[c] = mins[c].min(row[c]);
                maxs[c] = maxs[c].max(row[c]);
            }
        }
        Ok(Scaler { mins, maxs })
    }

    pub fn columns(&self) -> usize {
        self.mins.len()
    }

    pub fn bounds(&self, column: usize) -> (f64, f64) {
        (self.mins[column], self.maxs[column])
    }

    pub fn transform_value(&self, column: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[column], self.maxs[column]);
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn inverse_value(&self, column: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[column], self.maxs[column]);
        if hi > lo {
            v * (hi - lo) + lo
        } else {
            lo
        }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (c, (&v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            *o = self.transform_value(c, v);
        }
    }
}

/// One training pair: `lookback * feature_count` scaled values (row-major)
/// and the scaled target of the row immediately after the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub target_time: NaiveDateTime,
    pub timeframe_minutes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub spec: WindowSpec,
    pub scaler: Scaler,
    /// Rows dropped because an indicator cell was still undefined.
    pub dropped_undefined_rows: usize,
    /// Source series that were too short to yield a single window.
    pub short_series: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub total_samples: usize,
    pub samples_per_timeframe: BTreeMap<u32, usize>,
    pub dropped_undefined_rows: usize,
    pub short_series: usize,
    pub lookback: usize,
    pub feature_count: usize,
    pub target_column: FeatureColumn,
    pub scaler_bounds: Vec<(f64, f64)>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut per_tf = BTreeMap::new();
        for s in &self.samples {
            *per_tf.entry(s.timeframe_minutes).or_insert(0) += 1;
        }
        DatasetSummary {
            total_samples: self.samples.len(),
            samples_per_timeframe: per_tf,
            dropped_undefined_rows: self.dropped_undefined_rows,
            short_series: self.short_series,
            lookback: self.spec.lookback,
            feature_count: self.spec.feature_count,
            target_column: self.spec.target_column,
            scaler_bounds: (0..self.scaler.columns()).map(|c| self.scaler.bounds(c)).collect(),
        }
    }
}

/// Extracts raw (unscaled) feature rows plus their timestamps, dropping rows
/// where a used indicator cell is undefined.
pub fn feature_rows(
    series: &BarSeries,
    spec: &WindowSpec,
) -> Result<(Vec<Vec<f64>>, Vec<NaiveDateTime>, usize), DatasetError> {
    spec.validate()?;
    let needs_rsi = spec.feature_count > FeatureColumn::Rsi.index();
    let needs_ema = spec.feature_count > FeatureColumn::Ema.index();
    if (needs_rsi || needs_ema) && !series.is_enriched() {
        return Err(DatasetError::MissingIndicators);
    }
    let rsi = series.rsi();
    let ema = series.ema();
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut dropped = 0usize;
    for (i, bar) in series.bars().iter().enumerate() {
        let rsi_v = rsi.map(|col| col[i]);
        let ema_v = ema.map(|col| col[i]);
        if (needs_rsi && rsi_v.flatten().is_none()) || (needs_ema && ema_v.flatten().is_none()) {
            dropped += 1;
            continue;
        }
        let full = [
            bar.open,
            bar.high,
            bar.low,
            bar.close,
            bar.volume,
            rsi_v.flatten().unwrap_or(0.0),
            ema_v.flatten().unwrap_or(0.0),
        ];
        rows.push(full[..spec.feature_count].to_vec());
        times.push(bar.time);
    }
    Ok((rows, times, dropped))
}

/// Fits per-column min/max over the usable rows of a training series.
pub fn fit_scaler(series: &BarSeries, spec: &WindowSpec) -> Result<Scaler, DatasetError> {
    let (rows, _, _) = feature_rows(series, spec)?;
    Scaler::fit(&rows, spec.feature_count)
}

/// Slides the series into `(x, y)` samples.
///
/// With `L` usable rows this yields exactly `L - lookback` samples; a series
/// too short for a single window yields an empty set with the `short_series`
/// counter set rather than an error.
pub fn make_windows(
    series: &BarSeries,
    spec: &WindowSpec,
    scaler: &Scaler,
) -> Result<SampleSet, DatasetError> {
    spec.validate()?;
    if scaler.columns() != spec.feature_count {
        return Err(DatasetError::ScalerMismatch {
            scaler: scaler.columns(),
            spec: spec.feature_count,
        });
    }
    let (rows, times, dropped) = feature_rows(series, spec)?;
    let n = spec.lookback;
    let f = spec.feature_count;
    let target = spec.target_column.index();
    let mut set = SampleSet {
        samples: Vec::new(),
        spec: *spec,
        scaler: scaler.clone(),
        dropped_undefined_rows: dropped,
        short_series: 0,
    };
    if rows.len() < n + 1 {
        set.short_series = 1;
        return Ok(set);
    }
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut out = vec![0.0; f];
            scaler.transform_row(r, &mut out);
            out
        })
        .collect();
    for i in 0..rows.len() - n {
        let mut x = Vec::with_capacity(n * f);
        for row in &scaled[i..i + n] {
            x.extend_from_slice(row);
        }
        set.samples.push(Sample {
            x,
            y: scaled[i + n][target],
            target_time: times[i + n],
            timeframe_minutes: series.timeframe().minutes(),
        });
    }
    Ok(set)
}

/// Concatenates sets built with identical window dimensions.
///
/// Callers are expected to have built all sets against one shared scaler so
/// inverse-scaling stays meaningful; the merged set carries the first one.
pub fn merge(sets: Vec<SampleSet>) -> Result<SampleSet, DatasetError> {
    let mut iter = sets.into_iter();
    let mut merged = iter.next().ok_or(DatasetError::EmptySet)?;
    for set in iter {
        if set.spec != merged.spec {
            return Err(DatasetError::SpecMismatch(format!(
                "{:?} vs {:?}",
                set.spec, merged.spec
            )));
        }
        if set.scaler.columns() != merged.scaler.columns() {
            return Err(DatasetError::ScalerMismatch {
                scaler: set.scaler.columns(),
                spec: merged.scaler.columns(),
            });
        }
        merged.samples.extend(set.samples);
        merged.dropped_undefined_rows += set.dropped_undefined_rows;
        merged.short_series += set.short_series;
    }
    Ok(merged)
}

/// Chronological train/test split: samples are ordered by target time and the
/// first `floor(ratio * count)` go to train. No shuffling, by design.
pub fn split(set: &SampleSet, ratio: f64) -> Result<(SampleSet, SampleSet), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    if set.samples.is_empty() {
        return Err(DatasetError::EmptySet);
    }
    let mut ordered = set.samples.clone();
    ordered.sort_by_key(|s| s.target_time);
    let n_train = (ratio * ordered.len() as f64).floor() as usize;
    let test = ordered.split_off(n_train);
    let make = |samples: Vec<Sample>| SampleSet {
        samples,
        spec: set.spec,
        scaler: set.scaler.clone(),
        dropped_undefined_rows: set.dropped_undefined_rows,
        short_series: set.short_series,
    };
    Ok((make(ordered), make(test)))
}
