//! News-sentiment readings behind a provider interface.
//!
//! Per-source readings carry a bullishness probability in [0,1] and a
//! Positive/Negative/Neutral label mapped to +1/-1/0. A snapshot aggregates
//! both as plain arithmetic means. Backtests ingest sentiment exclusively by
//! replaying a CSV feed (`Time,Source,Probability,Label`); a deterministic
//! keyword-lexicon scorer stands in for a model-backed provider.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::TIME_FORMAT;

pub const SENTIMENT_CSV_HEADER: &str = "Time,Source,Probability,Label";

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("no readings to aggregate")]
    Empty,
    #[error("no reading available at or before {0}")]
    ColdStart(NaiveDateTime),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("probability {0} outside [0,1]")]
    InvalidProbability(f64),
    #[error("malformed feed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub fn parse(s: &str) -> Result<Self, SentimentError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(SentimentLabel::Positive),
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            other => Err(SentimentError::InvalidLabel(other.to_string())),
        }
    }
}

/// Positive maps to +1, Negative to -1, Neutral to 0.
pub fn label_to_number(label: SentimentLabel) -> i32 {
    match label {
        SentimentLabel::Positive => 1,
        SentimentLabel::Negative => -1,
        SentimentLabel::Neutral => 0,
    }
}

/// One source's reading at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReading {
    pub source: String,
    pub time: NaiveDateTime,
    pub probability: f64,
    pub label: SentimentLabel,
}

impl SourceReading {
    pub fn new(
        source: impl Into<String>,
        time: NaiveDateTime,
        probability: f64,
        label: SentimentLabel,
    ) -> Result<Self, SentimentError> {
        if !(0.0..=1.0).contains(&probability) || !probability.is_finite() {
            return Err(SentimentError::InvalidProbability(probability));
        }
        Ok(SourceReading {
            source: source.into(),
            time,
            probability,
            label,
        })
    }
}

/// The aggregated view the strategy consumes: arithmetic means of the source
/// probabilities and of the numeric labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentimentSnapshot {
    pub time: NaiveDateTime,
    pub readings: Vec<SourceReading>,
    pub avg_probability: f64,
    pub avg_sentiment: f64,
}

impl SentimentSnapshot {
    /// The fail-safe snapshot used before any feed data exists: neutral
    /// label, probability 0.5. Under the default thresholds it produces no
    /// orders.
    pub fn cold_start(time: NaiveDateTime) -> Self {
        let reading = SourceReading {
            source: "cold-start".into(),
            time,
            probability: 0.5,
            label: SentimentLabel::Neutral,
        };
        aggregate(vec![reading]).expect("one reading aggregates")
    }
}

/// Aggregates readings into a snapshot. The snapshot time is the latest
/// reading time.
pub fn aggregate(readings: Vec<SourceReading>) -> Result<SentimentSnapshot, SentimentError> {
    if readings.is_empty() {
        return Err(SentimentError::Empty);
    }
    let n = readings.len() as f64;
    let avg_probability = readings.iter().map(|r| r.probability).sum::<f64>() / n;
    let avg_sentiment = readings
        .iter()
        .map(|r| label_to_number(r.label) as f64)
        .sum::<f64>()
        / n;
    let time = readings.iter().map(|r| r.time).max().unwrap();
    Ok(SentimentSnapshot {
        time,
        readings,
        avg_probability,
        avg_sentiment,
    })
}

/// A source of per-site sentiment readings at a query time.
pub trait SentimentProvider {
    /// Returns the latest reading at or before `time` for each source that
    /// has one. Errors with [`SentimentError::ColdStart`] when no source has
    /// published yet.
    fn read(&self, time: NaiveDateTime) -> Result<Vec<SourceReading>, SentimentError>;
}

/// Pure replay of a CSV feed. Identical feed and query sequence produce
/// identical snapshots.
#[derive(Debug, Clone)]
pub struct FileSentimentProvider {
    // source -> time-ordered readings
    feeds: BTreeMap<String, Vec<SourceReading>>,
}

impl FileSentimentProvider {
    pub fn from_readings(readings: Vec<SourceReading>) -> Self {
        let mut feeds: BTreeMap<String, Vec<SourceReading>> = BTreeMap::new();
        for r in readings {
            feeds.entry(r.source.clone()).or_default().push(r);
        }
        for rs in feeds.values_mut() {
            rs.sort_by_key(|r| r.time);
        }
        FileSentimentProvider { feeds }
    }

    pub fn from_csv<R: Read>(source: R) -> Result<Self, SentimentError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let header = reader
            .headers()
            .map_err(|e| SentimentError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        let fields: Vec<&str> = header.iter().collect();
        let expected = ["Time", "Source", "Probability", "Label"];
        if fields.len() != 4
            || !fields
                .iter()
                .zip(expected)
                .all(|(g, e)| g.eq_ignore_ascii_case(e))
        {
            return Err(SentimentError::MalformedRow {
                line: 1,
                reason: format!("expected header `{SENTIMENT_CSV_HEADER}`"),
            });
        }
        let mut readings = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| SentimentError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let time = NaiveDateTime::parse_from_str(&record[0], TIME_FORMAT).map_err(|e| {
                SentimentError::MalformedRow {
                    line,
                    reason: format!("bad timestamp `{}`: {e}", &record[0]),
                }
            })?;
            let probability: f64 =
                record[2]
                    .parse()
                    .map_err(|e| SentimentError::MalformedRow {
                        line,
                        reason: format!("bad probability `{}`: {e}", &record[2]),
                    })?;
            let label = SentimentLabel::parse(&record[3])?;
            readings.push(SourceReading::new(
                record[1].to_string(),
                time,
                probability,
                label,
            )?);
        }
        Ok(Self::from_readings(readings))
    }

    pub fn sources(&self) -> Vec<&str> {
        self.feeds.keys().map(String::as_str).collect()
    }
}

impl SentimentProvider for FileSentimentProvider {
    fn read(&self, time: NaiveDateTime) -> Result<Vec<SourceReading>, SentimentError> {
        let mut out = Vec::new();
        for readings in self.feeds.values() {
            let idx = readings.partition_point(|r| r.time <= time);
            if idx > 0 {
                out.push(readings[idx - 1].clone());
            }
        }
        if out.is_empty() {
            return Err(SentimentError::ColdStart(time));
        }
        Ok(out)
    }
}

const POSITIVE_KEYWORDS: &[&str] = &[
    "gain", "gains", "rally", "rallies", "surge", "surges", "bullish", "record", "growth",
    "strong", "beats", "upgrade", "profit", "rebound", "soars", "optimism", "breakout",
];

const NEGATIVE_KEYWORDS: &[&str] = &[
    "loss", "losses", "fall", "falls", "drop", "drops", "bearish", "crash", "fear", "weak",
    "misses", "downgrade", "selloff", "plunge", "plunges", "recession", "slump",
];

/// Deterministic keyword scorer for headline text.
///
/// With `p` positive and `n` negative keyword hits the probability is
/// `0.5 + 0.5 * (p - n) / (p + n)` (0.5 when no keyword matches) and the
/// label follows the sign of `p - n`.
#[derive(Debug, Clone, Default)]
pub struct LexiconScorer;

impl LexiconScorer {
    pub fn score(&self, text: &str) -> (f64, SentimentLabel) {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let pos = words
            .iter()
            .filter(|w| POSITIVE_KEYWORDS.contains(w))
            .count() as f64;
        let neg = words
            .iter()
            .filter(|w| NEGATIVE_KEYWORDS.contains(w))
            .count() as f64;
        if pos + neg == 0.0 {
            return (0.5, SentimentLabel::Neutral);
        }
        let probability = 0.5 + 0.5 * (pos - neg) / (pos + neg);
        let label = if pos > neg {
            SentimentLabel::Positive
        } else if neg > pos {
            SentimentLabel::Negative
        } else {
            SentimentLabel::Neutral
        };
        (probability, label)
    }
}

/// Provider backed by the lexicon scorer over a timestamped headline feed.
#[derive(Debug, Clone)]
pub struct LexiconProvider {
    scorer: LexiconScorer,
    // (time, source, headline)
    items: Vec<(NaiveDateTime, String, String)>,
}

impl LexiconProvider {
    pub fn new(mut items: Vec<(NaiveDateTime, String, String)>) -> Self {
        items.sort_by_key(|item| item.0);
        LexiconProvider {
            scorer: LexiconScorer,
            items,
        }
    }
}

impl SentimentProvider for LexiconProvider {
    fn read(&self, time: NaiveDateTime) -> Result<Vec<SourceReading>, SentimentError> {
        let mut latest: BTreeMap<&str, (NaiveDateTime, &str)> = BTreeMap::new();
        for (t, source, text) in &self.items {
            if *t <= time {
                latest.insert(source.as_str(), (*t, text.as_str()));
            }
        }
        if latest.is_empty() {
            return Err(SentimentError::ColdStart(time));
        }
        latest
            .into_iter()
            .map(|(source, (t, text))| {
                let (probability, label) = self.scorer.score(text);
                SourceReading::new(source, t, probability, label)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIME_FORMAT).unwrap()
    }

    fn reading(source: &str, minute: i64, p: f64, label: SentimentLabel) -> SourceReading {
        SourceReading::new(source, at("2024-10-02 21:00:00") + chrono::Duration::minutes(minute), p, label)
            .unwrap()
    }

    #[test]
    fn label_mapping_is_exact() {
        assert_eq!(label_to_number(SentimentLabel::Positive), 1);
        assert_eq!(label_to_number(SentimentLabel::Negative), -1);
        assert_eq!(label_to_number(SentimentLabel::Neutral), 0);
    }

    #[test]
    fn aggregate_single_reading() {
        let snap = aggregate(vec![reading("a", 0, 0.9, SentimentLabel::Positive)]).unwrap();
        assert_eq!(snap.avg_probability, 0.9);
        assert_eq!(snap.avg_sentiment, 1.0);
    }

    #[test]
    fn aggregate_three_source_mean() {
        // The upstream feed's own precomputed average column (0.8754324138)
        // does not equal the mean of its three source columns; the mean is
        // what this pipeline computes.
        let snap = aggregate(vec![
            reading("benzinga", 0, 0.8615154028, SentimentLabel::Positive),
            reading("investing", 0, 0.9617832303, SentimentLabel::Positive),
            reading("ft", 0, 0.8922206759, SentimentLabel::Positive),
        ])
        .unwrap();
        assert!((snap.avg_probability - 0.9051731030).abs() < 1e-9);
    }

    #[test]
    fn aggregate_mixed_labels() {
        let snap = aggregate(vec![
            reading("a", 0, 0.5, SentimentLabel::Positive),
            reading("b", 0, 0.5, SentimentLabel::Positive),
            reading("c", 0, 0.5, SentimentLabel::Negative),
        ])
        .unwrap();
        assert!((snap.avg_sentiment - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_empty_errors() {
        assert!(matches!(aggregate(vec![]), Err(SentimentError::Empty)));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let rs = vec![
            reading("a", 0, 0.2, SentimentLabel::Negative),
            reading("b", 1, 0.7, SentimentLabel::Positive),
            reading("c", 2, 0.9, SentimentLabel::Neutral),
        ];
        let base = aggregate(rs.clone()).unwrap();
        let mut rev = rs;
        rev.reverse();
        let flipped = aggregate(rev).unwrap();
        assert!((base.avg_probability - flipped.avg_probability).abs() < 1e-15);
        assert!((base.avg_sentiment - flipped.avg_sentiment).abs() < 1e-15);
        assert_eq!(base.time, flipped.time);
    }

    #[test]
    fn snapshot_bounds_and_endpoints() {
        let all_pos = aggregate(vec![
            reading("a", 0, 1.0, SentimentLabel::Positive),
            reading("b", 0, 0.9, SentimentLabel::Positive),
        ])
        .unwrap();
        assert_eq!(all_pos.avg_sentiment, 1.0);

        let mixed = aggregate(vec![
            reading("a", 0, 1.0, SentimentLabel::Positive),
            reading("b", 0, 0.9, SentimentLabel::Neutral),
        ])
        .unwrap();
        assert!(mixed.avg_sentiment < 1.0 && mixed.avg_sentiment > -1.0);
    }

    const TABLE4_FEED: &str = "\
Time,Source,Probability,Label
2024-10-02 21:02:04,benzinga.com,0.8615154028,Positive
2024-10-02 21:02:04,investing.com,0.9618232846,Positive
2024-10-02 21:02:04,ft.com,0.8922206759,Positive
2024-10-02 21:14:04,benzinga.com,0.8615154028,Positive
2024-10-02 21:14:04,investing.com,0.9617832303,Positive
2024-10-02 21:14:04,ft.com,0.8922206759,Positive
";

    #[test]
    fn file_provider_replays_feed() {
        let provider = FileSentimentProvider::from_csv(TABLE4_FEED.as_bytes()).unwrap();
        let readings = provider.read(at("2024-10-02 21:02:04")).unwrap();
        assert_eq!(readings.len(), 3);
        assert!(readings.iter().all(|r| r.time == at("2024-10-02 21:02:04")));

        // Later query picks up the refreshed investing.com value.
        let later = provider.read(at("2024-10-02 21:30:00")).unwrap();
        let investing = later.iter().find(|r| r.source == "investing.com").unwrap();
        assert_eq!(investing.probability, 0.9617832303);
    }

    #[test]
    fn file_provider_cold_start() {
        let provider = FileSentimentProvider::from_csv(TABLE4_FEED.as_bytes()).unwrap();
        assert!(matches!(
            provider.read(at("2024-10-02 20:00:00")),
            Err(SentimentError::ColdStart(_))
        ));
    }

    #[test]
    fn file_provider_is_pure_replay() {
        let provider = FileSentimentProvider::from_csv(TABLE4_FEED.as_bytes()).unwrap();
        let a = provider.read(at("2024-10-02 21:20:00")).unwrap();
        let b = provider.read(at("2024-10-02 21:20:00")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lexicon_balanced_text_is_neutral() {
        let scorer = LexiconScorer;
        let (p, label) = scorer.score("stocks gain ground while bonds fall");
        assert_eq!(p, 0.5);
        assert_eq!(label, SentimentLabel::Neutral);
    }

    #[test]
    fn lexicon_signed_scores() {
        let scorer = LexiconScorer;
        let (p, label) = scorer.score("gold rallies to record gains");
        assert!(p > 0.5);
        assert_eq!(label, SentimentLabel::Positive);

        let (p, label) = scorer.score("markets crash as losses deepen, selloff continues");
        assert!(p < 0.5);
        assert_eq!(label, SentimentLabel::Negative);

        let (p, label) = scorer.score("the committee met on tuesday");
        assert_eq!(p, 0.5);
        assert_eq!(label, SentimentLabel::Neutral);
    }

    #[test]
    fn cold_start_snapshot_is_neutral() {
        let snap = SentimentSnapshot::cold_start(at("2024-10-02 21:00:00"));
        assert_eq!(snap.avg_probability, 0.5);
        assert_eq!(snap.avg_sentiment, 0.0);
    }
}
