//! The trading bot's decision engine.
//!
//! Two cadences drive it: a per-minute outer loop that slices the prediction
//! frame around "now", inspects the last 17 real closes and opens/closes
//! orders, and a 15-minute inner loop that refreshes the sentiment snapshot.
//! Rules, in order:
//!
//! 1. exit-buy: open Buy orders exist, the predicted price at now is the
//!    slice maximum (non-strict) and the real price is not the window
//!    minimum -> close the top-k most profitable Buys;
//! 2. exit-sell: mirrored with minimum/maximum swapped;
//! 3. entry-buy: average sentiment positive and average probability above
//!    the buy threshold -> open a Buy sized from the latest real price;
//! 4. entry-sell: average sentiment negative and average probability below
//!    the sell threshold -> open a Sell;
//! 5. otherwise no-op. Exits and at most one entry may fire in one minute.
//!
//! The decision function is pure; executing the actions against the paper
//! broker happens in [`Bot::step`].

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{position_size, AccountState, BrokerError, Side, SizingInputs, TradeEvent};
use crate::forecast::PredictionFrame;
use crate::marketdata::BarSeries;
use crate::sentiment::{aggregate, SentimentError, SentimentProvider, SentimentSnapshot};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("invalid bot config: {0}")]
    InvalidConfig(String),
    #[error("prediction frame does not cover {0}")]
    NowOutsideFrame(NaiveDateTime),
    #[error("no real bar at or before {0}")]
    NoRealData(NaiveDateTime),
    #[error("tick at {now} does not advance the clock (last {last})")]
    NonMonotonicTick {
        now: NaiveDateTime,
        last: NaiveDateTime,
    },
    #[error("sentiment error: {0}")]
    Sentiment(#[from] SentimentError),
    #[error("broker error: {0}")]
    Broker(#[from] BrokerError),
}

/// Thresholds and window sizes. Defaults follow the published rules: buy
/// above 0.87, sell below 0.5, 10-minute slices each way, 17 real closes,
/// close the top 2, risk 0.3, sentiment every 15 minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BotConfig {
    pub buy_prob_threshold: f64,
    pub sell_prob_threshold: f64,
    pub slice_back: usize,
    pub slice_fwd: usize,
    pub real_window: usize,
    pub close_top_k: usize,
    pub risk: f64,
    pub sentiment_refresh_minutes: i64,
}

impl Default for BotConfig {
    fn default() -> Self {
        BotConfig {
            buy_prob_threshold: 0.87,
            sell_prob_threshold: 0.5,
            slice_back: 10,
            slice_fwd: 10,
            real_window: 17,
            close_top_k: 2,
            risk: 0.3,
            sentiment_refresh_minutes: 15,
        }
    }
}

impl BotConfig {
    pub fn validate(&self) -> Result<(), StrategyError> {
        let ok = (0.0..=1.0).contains(&self.buy_prob_threshold)
            && (0.0..=1.0).contains(&self.sell_prob_threshold)
            && self.real_window > 0
            && self.close_top_k > 0
            && self.risk > 0.0
            && self.risk <= 1.0
            && self.sentiment_refresh_minutes > 0;
        if !ok {
            return Err(StrategyError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Up to `slice_back + slice_fwd + 1` prediction entries centered on now,
/// clipped at the frame edges, with their extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSlice {
    pub center: NaiveDateTime,
    pub entries: Vec<(NaiveDateTime, f64)>,
    pub min_price: f64,
    pub max_price: f64,
    pub center_price: f64,
}

impl PredictionSlice {
    /// Non-strict: a plateau counts as the maximum.
    pub fn center_is_max(&self) -> bool {
        self.center_price >= self.max_price
    }

    pub fn center_is_min(&self) -> bool {
        self.center_price <= self.min_price
    }
}

/// Slices the frame around `now`. Entries near the frame edges clip to what
/// exists; `now` itself must be covered.
pub fn slice_predictions(
    frame: &PredictionFrame,
    now: NaiveDateTime,
    config: &BotConfig,
) -> Result<PredictionSlice, StrategyError> {
    let center_price = frame
        .price_at(now)
        .ok_or(StrategyError::NowOutsideFrame(now))?;
    let mut entries = Vec::with_capacity(config.slice_back + config.slice_fwd + 1);
    for offset in -(config.slice_back as i64)..=(config.slice_fwd as i64) {
        let ts = now + chrono::Duration::minutes(offset);
        if let Some(price) = frame.price_at(ts) {
            entries.push((ts, price));
        }
    }
    let min_price = entries.iter().map(|(_, p)| *p).fold(f64::INFINITY, f64::min);
    let max_price = entries
        .iter()
        .map(|(_, p)| *p)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PredictionSlice {
        center: now,
        entries,
        min_price,
        max_price,
        center_price,
    })
}

/// The last `real_window` real closes up to and including now, plus whether
/// now's close is the window extremum (non-strict, so plateaus count).
#[derive(Debug, Clone, PartialEq)]
pub struct RealWindow {
    pub closes: Vec<f64>,
    pub latest_price: f64,
    pub is_now_min: bool,
    pub is_now_max: bool,
}

pub fn build_real_window(
    series: &BarSeries,
    now: NaiveDateTime,
    config: &BotConfig,
) -> Result<RealWindow, StrategyError> {
    let upto = series.bars().partition_point(|b| b.time <= now);
    if upto == 0 {
        return Err(StrategyError::NoRealData(now));
    }
    let start = upto.saturating_sub(config.real_window);
    let closes: Vec<f64> = series.bars()[start..upto].iter().map(|b| b.close).collect();
    let latest_price = *closes.last().unwrap();
    let min = closes.iter().copied().fold(f64::INFINITY, f64::min);
    let max = closes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RealWindow {
        latest_price,
        is_now_min: latest_price <= min,
        is_now_max: latest_price >= max,
        closes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    OpenBuy { volume: f64 },
    OpenSell { volume: f64 },
    Close { order_ids: Vec<u64> },
    NoOp { reason: String },
}

impl Action {
    pub fn describe(&self) -> String {
        match self {
            Action::OpenBuy { volume } => format!("open_buy {volume}"),
            Action::OpenSell { volume } => format!("open_sell {volume}"),
            Action::Close { order_ids } => format!(
                "close [{}]",
                order_ids
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Action::NoOp { reason } => format!("noop ({reason})"),
        }
    }
}

/// Applies the rule table. Pure: identical inputs produce identical actions.
pub fn decide(
    slice: &PredictionSlice,
    real: &RealWindow,
    snapshot: &SentimentSnapshot,
    account: &AccountState,
    config: &BotConfig,
) -> Vec<Action> {
    let mut actions = Vec::new();

    // Exits first so freed slots can be reused by this minute's entry.
    let has_buys = account.open_orders_on(Side::Buy).next().is_some();
    if has_buys && slice.center_is_max() && !real.is_now_min {
        let ids = account.top_k_by_profit(config.close_top_k, real.latest_price, Some(Side::Buy));
        actions.push(Action::Close { order_ids: ids });
    }
    let has_sells = account.open_orders_on(Side::Sell).next().is_some();
    if has_sells && slice.center_is_min() && !real.is_now_max {
        let ids = account.top_k_by_profit(config.close_top_k, real.latest_price, Some(Side::Sell));
        actions.push(Action::Close { order_ids: ids });
    }

    // At most one entry per minute, sized from the latest REAL price.
    let sentiment = snapshot.avg_sentiment;
    let probability = snapshot.avg_probability;
    let entry_side = if sentiment > 0.0 && probability > config.buy_prob_threshold {
        Some(Side::Buy)
    } else if sentiment < 0.0 && probability < config.sell_prob_threshold {
        Some(Side::Sell)
    } else {
        None
    };
    if let Some(side) = entry_side {
        let sizing = position_size(
            &SizingInputs {
                balance: account.balance(),
                risk: config.risk,
                price: real.latest_price,
            },
            account.limits(),
        );
        match sizing {
            Ok(volume) => actions.push(match side {
                Side::Buy => Action::OpenBuy { volume },
                Side::Sell => Action::OpenSell { volume },
            }),
            Err(e) => {
                if actions.is_empty() {
                    actions.push(Action::NoOp {
                        reason: format!("entry skipped: {e}"),
                    });
                }
            }
        }
    }
    if actions.is_empty() {
        actions.push(Action::NoOp {
            reason: "neutral".into(),
        });
    }
    actions
}

/// FNV-1a over a canonical rendering of the decision inputs; stamped into
/// the decision log so replays can be diffed quickly.
pub fn decision_digest(
    slice: &PredictionSlice,
    real: &RealWindow,
    snapshot: &SentimentSnapshot,
    balance: f64,
    open_orders: usize,
) -> String {
    let canonical = format!(
        "{}|{:.9}|{:.9}|{:.9}|{:.9}|{}|{}|{:.9}|{:.9}|{:.9}|{}",
        slice.center,
        slice.center_price,
        slice.min_price,
        slice.max_price,
        real.latest_price,
        real.is_now_min,
        real.is_now_max,
        snapshot.avg_probability,
        snapshot.avg_sentiment,
        balance,
        open_orders,
    );
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// One line of the line-delimited JSON decision log.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionRecord {
    pub time: NaiveDateTime,
    pub digest: String,
    pub actions: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub struct StepOutcome {
    pub actions: Vec<Action>,
    pub events: Vec<TradeEvent>,
    pub refreshed_sentiment: bool,
    pub record: DecisionRecord,
}

/// The stateful bot: sentiment cadence plus action execution.
#[derive(Debug)]
pub struct Bot {
    config: BotConfig,
    last_tick: Option<NaiveDateTime>,
    last_refresh: Option<NaiveDateTime>,
    snapshot: Option<SentimentSnapshot>,
}

impl Bot {
    pub fn new(config: BotConfig) -> Result<Self, StrategyError> {
        config.validate()?;
        Ok(Bot {
            config,
            last_tick: None,
            last_refresh: None,
            snapshot: None,
        })
    }

    pub fn config(&self) -> &BotConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Option<&SentimentSnapshot> {
        self.snapshot.as_ref()
    }

    fn refresh_sentiment(
        &mut self,
        now: NaiveDateTime,
        provider: &dyn SentimentProvider,
    ) -> Result<bool, StrategyError> {
        let due = self
            .last_refresh
            .is_none_or(|t| now - t >= chrono::Duration::minutes(self.config.sentiment_refresh_minutes));
        if !due {
            return Ok(false);
        }
        let snapshot = match provider.read(now) {
            Ok(readings) => aggregate(readings)?,
            Err(SentimentError::ColdStart(_)) => SentimentSnapshot::cold_start(now),
            Err(e) => return Err(e.into()),
        };
        self.snapshot = Some(snapshot);
        self.last_refresh = Some(now);
        Ok(true)
    }

    /// One minute tick: refresh sentiment when due, slice predictions, build
    /// the real window, decide and execute against the account.
    ///
    /// Missing prediction coverage yields a logged no-op rather than an
    /// error; a cap-rejected entry is noted and skipped.
    pub fn step(
        &mut self,
        now: NaiveDateTime,
        frame: Option<&PredictionFrame>,
        series: &BarSeries,
        provider: &dyn SentimentProvider,
        account: &mut AccountState,
    ) -> Result<StepOutcome, StrategyError> {
        if let Some(last) = self.last_tick {
            if now <= last {
                return Err(StrategyError::NonMonotonicTick { now, last });
            }
        }
        self.last_tick = Some(now);
        let refreshed = self.refresh_sentiment(now, provider)?;
        let snapshot = self
            .snapshot
            .clone()
            .unwrap_or_else(|| SentimentSnapshot::cold_start(now));

        let slice = match frame {
            Some(f) if f.covers(now) => slice_predictions(f, now, &self.config)?,
            _ => {
                let reason = format!("no prediction coverage at {now}");
                return Ok(StepOutcome {
                    actions: vec![Action::NoOp {
                        reason: reason.clone(),
                    }],
                    events: Vec::new(),
                    refreshed_sentiment: refreshed,
                    record: DecisionRecord {
                        time: now,
                        digest: String::from("-"),
                        actions: vec![format!("noop ({reason})")],
                        notes: vec![reason],
                    },
                });
            }
        };
        let real = build_real_window(series, now, &self.config)?;
        let actions = decide(&slice, &real, &snapshot, account, &self.config);

        let mut events = Vec::new();
        let mut notes = Vec::new();
        for action in &actions {
            match action {
                Action::Close { order_ids } => {
                    for id in order_ids {
                        let (event, _) = account.close_order(*id, real.latest_price, now)?;
                        events.push(event);
                    }
                }
                Action::OpenBuy { volume } | Action::OpenSell { volume } => {
                    let side = match action {
                        Action::OpenBuy { .. } => Side::Buy,
                        _ => Side::Sell,
                    };
                    match account.open_order(side, *volume, real.latest_price, now) {
                        Ok(event) => events.push(event),
                        Err(BrokerError::OrderCapReached(cap)) => {
                            notes.push(format!("entry rejected: open-order cap {cap}"));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                Action::NoOp { reason } => notes.push(reason.clone()),
            }
        }
        let record = DecisionRecord {
            time: now,
            digest: decision_digest(
                &slice,
                &real,
                &snapshot,
                account.balance(),
                account.open_orders().len(),
            ),
            actions: actions.iter().map(Action::describe).collect(),
            notes,
        };
        Ok(StepOutcome {
            actions,
            events,
            refreshed_sentiment: refreshed,
            record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::AccountLimits;
    use crate::marketdata::{Bar, Timeframe, TIME_FORMAT};
    use crate::sentiment::{SentimentLabel, SourceReading};
    use proptest::prelude::*;

    fn at(minute: i64) -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2024-09-02 00:00:00", TIME_FORMAT).unwrap()
            + chrono::Duration::minutes(minute)
    }

    fn frame_from(prices: &[f64]) -> PredictionFrame {
        PredictionFrame::new(
            prices
                .iter()
                .enumerate()
                .map(|(i, &p)| (at(i as i64), p))
                .collect(),
        )
        .unwrap()
    }

    fn series_from(closes: &[f64]) -> BarSeries {
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                time: at(i as i64),
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 1.0,
            })
            .collect();
        BarSeries::new(Timeframe::new(1).unwrap(), bars).unwrap()
    }

    fn snapshot(probability: f64, sentiment: f64) -> SentimentSnapshot {
        SentimentSnapshot {
            time: at(0),
            readings: vec![SourceReading {
                source: "test".into(),
                time: at(0),
                probability,
                label: SentimentLabel::Neutral,
            }],
            avg_probability: probability,
            avg_sentiment: sentiment,
        }
    }

    fn account() -> AccountState {
        AccountState::new(1000.0, 100.0, AccountLimits::default()).unwrap()
    }

    fn mk_slice(center_price: f64, min: f64, max: f64) -> PredictionSlice {
        PredictionSlice {
            center: at(10),
            entries: vec![(at(10), center_price)],
            min_price: min,
            max_price: max,
            center_price,
        }
    }

    fn mk_real(latest: f64, is_min: bool, is_max: bool) -> RealWindow {
        RealWindow {
            closes: vec![latest],
            latest_price: latest,
            is_now_min: is_min,
            is_now_max: is_max,
        }
    }

    #[test]
    fn slice_at_frame_start_clips_to_eleven() {
        let frame = frame_from(&(0..40).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
        let slice = slice_predictions(&frame, at(0), &BotConfig::default()).unwrap();
        assert_eq!(slice.entries.len(), 11);
        assert_eq!(slice.center_price, 100.0);
    }

    #[test]
    fn slice_interior_spans_twenty_one() {
        let frame = frame_from(&(0..40).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
        let slice = slice_predictions(&frame, at(20), &BotConfig::default()).unwrap();
        assert_eq!(slice.entries.len(), 21);
        assert_eq!(slice.entries.first().unwrap().0, at(10));
        assert_eq!(slice.entries.last().unwrap().0, at(30));
    }

    #[test]
    fn slice_monotone_frame_max_is_last_entry() {
        let frame = frame_from(&(0..40).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
        let slice = slice_predictions(&frame, at(20), &BotConfig::default()).unwrap();
        assert_eq!(slice.max_price, slice.entries.last().unwrap().1);
        assert!(!slice.center_is_max());
        assert!(!slice.center_is_min());
    }

    #[test]
    fn slice_outside_frame_errors() {
        let frame = frame_from(&[100.0, 101.0]);
        assert!(matches!(
            slice_predictions(&frame, at(10), &BotConfig::default()),
            Err(StrategyError::NowOutsideFrame(_))
        ));
    }

    #[test]
    fn real_window_rising_closes() {
        let closes: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let series = series_from(&closes);
        let real = build_real_window(&series, at(29), &BotConfig::default()).unwrap();
        assert_eq!(real.closes.len(), 17);
        assert!(real.is_now_max);
        assert!(!real.is_now_min);
        assert_eq!(real.latest_price, 129.0);
    }

    #[test]
    fn real_window_constant_closes_sets_both_flags() {
        let series = series_from(&[50.0; 20]);
        let real = build_real_window(&series, at(19), &BotConfig::default()).unwrap();
        assert!(real.is_now_max);
        assert!(real.is_now_min);
    }

    #[test]
    fn real_window_requires_data() {
        let series = series_from(&[1.0]);
        assert!(matches!(
            build_real_window(&series, at(0) - chrono::Duration::minutes(5), &BotConfig::default()),
            Err(StrategyError::NoRealData(_))
        ));
    }

    #[test]
    fn decide_entry_buy() {
        let actions = decide(
            &mk_slice(100.0, 99.0, 101.0),
            &mk_real(2000.0, false, false),
            &snapshot(0.90, 1.0),
            &account(),
            &BotConfig::default(),
        );
        // V = 1000 * 0.3 / 2000 = 0.15
        assert_eq!(actions, vec![Action::OpenBuy { volume: 0.15 }]);
    }

    #[test]
    fn decide_entry_sell() {
        let actions = decide(
            &mk_slice(100.0, 99.0, 101.0),
            &mk_real(2000.0, false, false),
            &snapshot(0.40, -1.0),
            &account(),
            &BotConfig::default(),
        );
        assert_eq!(actions, vec![Action::OpenSell { volume: 0.15 }]);
    }

    #[test]
    fn decide_neutral_sentiment_never_enters() {
        for probability in [0.0, 0.25, 0.5, 0.87, 0.88, 1.0] {
            let actions = decide(
                &mk_slice(100.0, 99.0, 101.0),
                &mk_real(2000.0, false, false),
                &snapshot(probability, 0.0),
                &account(),
                &BotConfig::default(),
            );
            assert_eq!(
                actions,
                vec![Action::NoOp {
                    reason: "neutral".into()
                }],
                "probability {probability}"
            );
        }
    }

    #[test]
    fn decide_dead_zone_probability_is_noop() {
        let actions = decide(
            &mk_slice(100.0, 99.0, 101.0),
            &mk_real(2000.0, false, false),
            &snapshot(0.60, 1.0),
            &account(),
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![Action::NoOp {
                reason: "neutral".into()
            }]
        );
    }

    #[test]
    fn decide_exit_buy_and_suppression() {
        let mut acct = account();
        let o1 = acct.open_order(Side::Buy, 0.1, 95.0, at(0)).unwrap();
        let o2 = acct.open_order(Side::Buy, 0.1, 97.0, at(1)).unwrap();
        let o3 = acct.open_order(Side::Buy, 0.1, 99.0, at(2)).unwrap();
        let _ = o3;
        let slice = mk_slice(101.0, 96.0, 101.0); // center is the slice max

        // Real price at the window minimum suppresses the exit.
        let actions = decide(
            &slice,
            &mk_real(100.0, true, false),
            &snapshot(0.5, 0.0),
            &acct,
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![Action::NoOp {
                reason: "neutral".into()
            }]
        );

        // Otherwise the two most profitable Buys close.
        let actions = decide(
            &slice,
            &mk_real(100.0, false, true),
            &snapshot(0.5, 0.0),
            &acct,
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![Action::Close {
                order_ids: vec![o1.order_id, o2.order_id]
            }]
        );
    }

    #[test]
    fn decide_exit_sell_mirrors() {
        let mut acct = account();
        let o = acct.open_order(Side::Sell, 0.1, 95.0, at(0)).unwrap();
        let slice = mk_slice(90.0, 90.0, 101.0); // center is the slice min

        // Suppressed while the real price is the window maximum.
        let actions = decide(
            &slice,
            &mk_real(94.0, false, true),
            &snapshot(0.5, 0.0),
            &acct,
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![Action::NoOp {
                reason: "neutral".into()
            }]
        );

        let actions = decide(
            &slice,
            &mk_real(94.0, true, false),
            &snapshot(0.5, 0.0),
            &acct,
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![Action::Close {
                order_ids: vec![o.order_id]
            }]
        );
    }

    #[test]
    fn decide_exit_and_entry_co_occur() {
        let mut acct = account();
        let o = acct.open_order(Side::Buy, 0.1, 95.0, at(0)).unwrap();
        let actions = decide(
            &mk_slice(101.0, 96.0, 101.0),
            &mk_real(2000.0, false, false),
            &snapshot(0.95, 1.0),
            &acct,
            &BotConfig::default(),
        );
        assert_eq!(
            actions,
            vec![
                Action::Close {
                    order_ids: vec![o.order_id]
                },
                Action::OpenBuy { volume: 0.15 },
            ]
        );
    }

    #[test]
    fn decide_is_pure() {
        let acct = account();
        let slice = mk_slice(100.0, 99.0, 101.0);
        let real = mk_real(2000.0, false, false);
        let snap = snapshot(0.9, 1.0);
        let a = decide(&slice, &real, &snap, &acct, &BotConfig::default());
        let b = decide(&slice, &real, &snap, &acct, &BotConfig::default());
        assert_eq!(a, b);
    }

    #[test]
    fn decide_sizing_below_minimum_is_noop() {
        let acct = AccountState::new(0.5, 100.0, AccountLimits::default()).unwrap();
        let actions = decide(
            &mk_slice(100.0, 99.0, 101.0),
            &mk_real(2000.0, false, false),
            &snapshot(0.95, 1.0),
            &acct,
            &BotConfig::default(),
        );
        assert!(matches!(&actions[..], [Action::NoOp { reason }] if reason.contains("entry skipped")));
    }

    struct FixedProvider;

    impl SentimentProvider for FixedProvider {
        fn read(&self, time: NaiveDateTime) -> Result<Vec<SourceReading>, SentimentError> {
            Ok(vec![SourceReading {
                source: "fixed".into(),
                time,
                probability: 0.9,
                label: SentimentLabel::Positive,
            }])
        }
    }

    #[test]
    fn step_refresh_cadence() {
        let frame = frame_from(&[100.0; 60]);
        let series = series_from(&[100.0; 60]);
        let mut bot = Bot::new(BotConfig::default()).unwrap();
        let mut acct = account();

        let o1 = bot.step(at(20), Some(&frame), &series, &FixedProvider, &mut acct).unwrap();
        assert!(o1.refreshed_sentiment);
        let o2 = bot.step(at(21), Some(&frame), &series, &FixedProvider, &mut acct).unwrap();
        assert!(!o2.refreshed_sentiment);
        // Exactly 15 minutes later: refresh fires on the boundary.
        let o3 = bot.step(at(35), Some(&frame), &series, &FixedProvider, &mut acct).unwrap();
        assert!(o3.refreshed_sentiment);
    }

    #[test]
    fn step_rejects_non_monotonic_ticks() {
        let frame = frame_from(&[100.0; 30]);
        let series = series_from(&[100.0; 30]);
        let mut bot = Bot::new(BotConfig::default()).unwrap();
        let mut acct = account();
        bot.step(at(5), Some(&frame), &series, &FixedProvider, &mut acct)
            .unwrap();
        assert!(matches!(
            bot.step(at(5), Some(&frame), &series, &FixedProvider, &mut acct),
            Err(StrategyError::NonMonotonicTick { .. })
        ));
    }

    #[test]
    fn step_missing_coverage_is_logged_noop() {
        let frame = frame_from(&[100.0; 5]);
        let series = series_from(&[100.0; 60]);
        let mut bot = Bot::new(BotConfig::default()).unwrap();
        let mut acct = account();
        let out = bot
            .step(at(50), Some(&frame), &series, &FixedProvider, &mut acct)
            .unwrap();
        assert!(matches!(&out.actions[..], [Action::NoOp { reason }] if reason.contains("coverage")));
        assert!(out.events.is_empty());
    }

    #[test]
    fn step_replay_is_deterministic() {
        let prices: Vec<f64> = (0..120).map(|i| 100.0 + (i as f64 * 0.3).sin() * 5.0).collect();
        let frame = frame_from(&prices);
        let series = series_from(&prices);
        let run = || {
            let mut bot = Bot::new(BotConfig::default()).unwrap();
            let mut acct = account();
            let mut all = Vec::new();
            for minute in 20..100 {
                let out = bot
                    .step(at(minute), Some(&frame), &series, &FixedProvider, &mut acct)
                    .unwrap();
                all.push((out.actions, out.events));
            }
            (all, acct.balance())
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    proptest! {
        /// Window flags agree with a brute-force scan over the same closes.
        #[test]
        fn real_window_flags_match_oracle(closes in proptest::collection::vec(50.0f64..150.0, 1..40)) {
            let series = series_from(&closes);
            let now = at(closes.len() as i64 - 1);
            let real = build_real_window(&series, now, &BotConfig::default()).unwrap();
            let start = closes.len().saturating_sub(17);
            let window = &closes[start..];
            let latest = *window.last().unwrap();
            let brute_min = window.iter().all(|c| latest <= *c);
            let brute_max = window.iter().all(|c| latest >= *c);
            prop_assert_eq!(real.is_now_min, brute_min);
            prop_assert_eq!(real.is_now_max, brute_max);
            prop_assert_eq!(real.latest_price, latest);
        }

        /// Exit-buy never fires while the real price is the window minimum;
        /// exit-sell never fires while it is the maximum.
        #[test]
        fn exit_suppression_holds(
            center in 90.0f64..110.0,
            lo in 80.0f64..90.0,
            hi in 110.0f64..120.0,
            latest in 50.0f64..150.0,
            is_min in any::<bool>(),
            is_max in any::<bool>(),
            center_is_max in any::<bool>(),
        ) {
            let mut acct = account();
            acct.open_order(Side::Buy, 0.1, 100.0, at(0)).unwrap();
            acct.open_order(Side::Sell, 0.1, 100.0, at(1)).unwrap();
            let (min_p, max_p, center_p) = if center_is_max {
                (lo, center, center)
            } else {
                (center, hi, center)
            };
            let slice = mk_slice(center_p, min_p, max_p);
            let real = mk_real(latest, is_min, is_max);
            let actions = decide(&slice, &real, &snapshot(0.5, 0.0), &acct, &BotConfig::default());
            let closed_buy = actions.iter().any(|a| matches!(a, Action::Close { order_ids } if order_ids.contains(&1)));
            let closed_sell = actions.iter().any(|a| matches!(a, Action::Close { order_ids } if order_ids.contains(&2)));
            if is_min {
                prop_assert!(!closed_buy);
            }
            if is_max {
                prop_assert!(!closed_sell);
            }
        }

        /// Entries are sized from the latest real price, never predictions.
        #[test]
        fn entry_sizing_uses_real_price(latest in 100.0f64..5000.0) {
            let actions = decide(
                &mk_slice(1.0, 0.5, 2.0), // predictions wildly different from real
                &mk_real(latest, false, false),
                &snapshot(0.95, 1.0),
                &account(),
                &BotConfig::default(),
            );
            let expected = position_size(
                &SizingInputs { balance: 1000.0, risk: 0.3, price: latest },
                &AccountLimits::default(),
            );
            match (&actions[..], expected) {
                ([Action::OpenBuy { volume }], Ok(v)) => prop_assert_eq!(*volume, v),
                ([Action::NoOp { .. }], Err(_)) => {}
                other => prop_assert!(false, "unexpected {:?}", other.0),
            }
        }
    }
}
