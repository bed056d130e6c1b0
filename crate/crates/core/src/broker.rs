//! Deterministic paper-trading account: sizing, order lifecycle, PnL.
//!
//! Zero-fee by default (an optional per-trade fee is deducted inside
//! `realized_pnl` so the conservation invariant `balance - initial ==
//! sum(realized)` holds under any configuration). Margin, leverage and
//! partial fills are out of scope. Every mutation either fully applies or
//! leaves the account untouched, and returns the trade-log event describing
//! it.
//!
//! Trade log CSV: `time,event,order_id,side,volume,price,realized_pnl,balance`
//! with full-precision floats, replayable to the exact final balance.

use std::io::Write;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::TIME_FORMAT;

pub const TRADE_LOG_HEADER: &str = "time,event,order_id,side,volume,price,realized_pnl,balance";

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("volume {volume} below minimum {minimum}; no trade")]
    BelowMinimumVolume { volume: f64, minimum: f64 },
    #[error("open-order cap {0} reached")]
    OrderCapReached(usize),
    #[error("unknown order id {0}")]
    UnknownOrder(u64),
    #[error("order {0} already closed")]
    AlreadyClosed(u64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("malformed trade log row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "buy" => Ok(Side::Buy),
            "sell" => Ok(Side::Sell),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

/// Inputs to the `V = B*R / P` sizing rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingInputs {
    pub balance: f64,
    pub risk: f64,
    pub price: f64,
}

impl SizingInputs {
    pub fn validate(&self) -> Result<(), BrokerError> {
        if !(self.balance >= 0.0 && self.balance.is_finite()) {
            return Err(BrokerError::Invalid(format!("balance {}", self.balance)));
        }
        if !(self.risk > 0.0 && self.risk <= 1.0) {
            return Err(BrokerError::Invalid(format!("risk {}", self.risk)));
        }
        if !(self.price > 0.0 && self.price.is_finite()) {
            return Err(BrokerError::Invalid(format!("price {}", self.price)));
        }
        Ok(())
    }
}

/// Volume granularity and account limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccountLimits {
    pub volume_step: f64,
    pub min_volume: f64,
    pub max_open_orders: usize,
    pub fee_per_trade: f64,
}

impl Default for AccountLimits {
    fn default() -> Self {
        AccountLimits {
            volume_step: 0.01,
            min_volume: 0.01,
            max_open_orders: 5,
            fee_per_trade: 0.0,
        }
    }
}

/// `V = B*R / P`, floored to the volume step.
///
/// A result below the minimum volume signals no-trade rather than a
/// zero-size order.
pub fn position_size(inputs: &SizingInputs, limits: &AccountLimits) -> Result<f64, BrokerError> {
    inputs.validate()?;
    let raw = inputs.balance * inputs.risk / inputs.price;
    // Tiny epsilon guards the floor against one-ulp representation error.
    let steps = (raw / limits.volume_step + 1e-9).floor();
    let volume = steps * limits.volume_step;
    if volume < limits.min_volume {
        return Err(BrokerError::BelowMinimumVolume {
            volume,
            minimum: limits.min_volume,
        });
    }
    Ok(volume)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub side: Side,
    pub volume: f64,
    pub open_price: f64,
    pub open_time: NaiveDateTime,
    pub close_price: Option<f64>,
    pub close_time: Option<NaiveDateTime>,
    pub realized_pnl: Option<f64>,
}

/// Profit of an open order at `current_price`.
pub fn unrealized_pnl(order: &Order, current_price: f64, multiplier: f64) -> f64 {
    match order.side {
        Side::Buy => (current_price - order.open_price) * order.volume * multiplier,
        Side::Sell => (order.open_price - current_price) * order.volume * multiplier,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Open,
    Close,
    ForceClose,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Open => "open",
            EventKind::Close => "close",
            EventKind::ForceClose => "force_close",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "open" => Ok(EventKind::Open),
            "close" => Ok(EventKind::Close),
            "force_close" => Ok(EventKind::ForceClose),
            other => Err(format!("unknown event `{other}`")),
        }
    }
}

/// One trade-log row: the full lifecycle audit trail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeEvent {
    pub time: NaiveDateTime,
    pub event: EventKind,
    pub order_id: u64,
    pub side: Side,
    pub volume: f64,
    pub price: f64,
    pub realized_pnl: Option<f64>,
    pub balance: f64,
}

/// The simulated account.
///
/// Conservation holds by construction: the balance is derived as
/// `initial_balance + realized_sum`, with `realized_sum` accumulated in
/// close order, so `balance == initial_balance + sum(realized pnl)` is an
/// exact (bit-level) identity at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountState {
    realized_sum: f64,
    initial_balance: f64,
    contract_multiplier: f64,
    limits: AccountLimits,
    next_order_id: u64,
    open_orders: Vec<Order>,
    closed_orders: Vec<Order>,
}

impl AccountState {
    pub fn new(
        initial_balance: f64,
        contract_multiplier: f64,
        limits: AccountLimits,
    ) -> Result<Self, BrokerError> {
        if !(initial_balance >= 0.0 && initial_balance.is_finite()) {
            return Err(BrokerError::Invalid(format!(
                "initial balance {initial_balance}"
            )));
        }
        if !(contract_multiplier > 0.0 && contract_multiplier.is_finite()) {
            return Err(BrokerError::Invalid(format!(
                "contract multiplier {contract_multiplier}"
            )));
        }
        Ok(AccountState {
            realized_sum: 0.0,
            initial_balance,
            contract_multiplier,
            limits,
            next_order_id: 1,
            open_orders: Vec::new(),
            closed_orders: Vec::new(),
        })
    }

    pub fn balance(&self) -> f64 {
        self.initial_balance + self.realized_sum
    }

    pub fn initial_balance(&self) -> f64 {
        self.initial_balance
    }

    pub fn contract_multiplier(&self) -> f64 {
        self.contract_multiplier
    }

    pub fn limits(&self) -> &AccountLimits {
        &self.limits
    }

    pub fn open_orders(&self) -> &[Order] {
        &self.open_orders
    }

    pub fn closed_orders(&self) -> &[Order] {
        &self.closed_orders
    }

    pub fn open_orders_on(&self, side: Side) -> impl Iterator<Item = &Order> {
        self.open_orders.iter().filter(move |o| o.side == side)
    }

    /// Balance plus unrealized PnL of all open orders at `current_price`.
    pub fn equity(&self, current_price: f64) -> f64 {
        self.balance()
            + self
                .open_orders
                .iter()
                .map(|o| unrealized_pnl(o, current_price, self.contract_multiplier))
                .sum::<f64>()
    }

    /// Opens an order. The balance is untouched (margin is out of scope).
    pub fn open_order(
        &mut self,
        side: Side,
        volume: f64,
        price: f64,
        time: NaiveDateTime,
    ) -> Result<TradeEvent, BrokerError> {
        if volume < self.limits.min_volume || !volume.is_finite() {
            return Err(BrokerError::BelowMinimumVolume {
                volume,
                minimum: self.limits.min_volume,
            });
        }
        if !(price > 0.0 && price.is_finite()) {
            return Err(BrokerError::Invalid(format!("price {price}")));
        }
        if self.open_orders.len() >= self.limits.max_open_orders {
            return Err(BrokerError::OrderCapReached(self.limits.max_open_orders));
        }
        let id = self.next_order_id;
        self.next_order_id += 1;
        self.open_orders.push(Order {
            id,
            side,
            volume,
            open_price: price,
            open_time: time,
            close_price: None,
            close_time: None,
            realized_pnl: None,
        });
        Ok(TradeEvent {
            time,
            event: EventKind::Open,
            order_id: id,
            side,
            volume,
            price,
            realized_pnl: None,
            balance: self.balance(),
        })
    }

    fn close_inner(
        &mut self,
        order_id: u64,
        price: f64,
        time: NaiveDateTime,
        kind: EventKind,
    ) -> Result<(TradeEvent, f64), BrokerError> {
        if !(price > 0.0 && price.is_finite()) {
            return Err(BrokerError::Invalid(format!("price {price}")));
        }
        let idx = match self.open_orders.iter().position(|o| o.id == order_id) {
            Some(i) => i,
            None => {
                return Err(if self.closed_orders.iter().any(|o| o.id == order_id) {
                    BrokerError::AlreadyClosed(order_id)
                } else {
                    BrokerError::UnknownOrder(order_id)
                });
            }
        };
        let mut order = self.open_orders.remove(idx);
        let realized =
            unrealized_pnl(&order, price, self.contract_multiplier) - self.limits.fee_per_trade;
        order.close_price = Some(price);
        order.close_time = Some(time);
        order.realized_pnl = Some(realized);
        self.realized_sum += realized;
        let event = TradeEvent {
            time,
            event: kind,
            order_id,
            side: order.side,
            volume: order.volume,
            price,
            realized_pnl: Some(realized),
            balance: self.balance(),
        };
        self.closed_orders.push(order);
        Ok((event, realized))
    }

    /// Closes an open order at `price`, realizing its PnL into the balance.
    pub fn close_order(
        &mut self,
        order_id: u64,
        price: f64,
        time: NaiveDateTime,
    ) -> Result<(TradeEvent, f64), BrokerError> {
        self.close_inner(order_id, price, time, EventKind::Close)
    }

    /// End-of-run close, distinguished in the trade log.
    pub fn force_close_order(
        &mut self,
        order_id: u64,
        price: f64,
        time: NaiveDateTime,
    ) -> Result<(TradeEvent, f64), BrokerError> {
        self.close_inner(order_id, price, time, EventKind::ForceClose)
    }

    /// Ids of the `k` most profitable open orders at `current_price`,
    /// optionally restricted to one side. Ties break toward the earlier
    /// open time, then the lower id. Losing orders are not filtered out.
    pub fn top_k_by_profit(
        &self,
        k: usize,
        current_price: f64,
        side: Option<Side>,
    ) -> Vec<u64> {
        let mut ranked: Vec<(&Order, f64)> = self
            .open_orders
            .iter()
            .filter(|o| side.is_none_or(|s| o.side == s))
            .map(|o| (o, unrealized_pnl(o, current_price, self.contract_multiplier)))
            .collect();
        ranked.sort_by(|(a, pa), (b, pb)| {
            pb.partial_cmp(pa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.open_time.cmp(&b.open_time))
                .then(a.id.cmp(&b.id))
        });
        ranked.into_iter().take(k).map(|(o, _)| o.id).collect()
    }

    /// Sum of realized PnL in close order.
    pub fn realized_total(&self) -> f64 {
        self.closed_orders
            .iter()
            .map(|o| o.realized_pnl.unwrap_or(0.0))
            .sum()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes trade events as the replayable CSV log.
pub fn write_trade_log<W: Write>(events: &[TradeEvent], mut sink: W) -> Result<(), BrokerError> {
    writeln!(sink, "{TRADE_LOG_HEADER}")?;
    for e in events {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            e.time.format(TIME_FORMAT),
            e.event.as_str(),
            e.order_id,
            e.side.as_str(),
            e.volume,
            e.price,
            fmt_opt(e.realized_pnl),
            e.balance,
        )?;
    }
    Ok(())
}

/// Parses a trade log written by [`write_trade_log`].
pub fn read_trade_log<R: std::io::Read>(source: R) -> Result<Vec<TradeEvent>, BrokerError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut events = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| BrokerError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| BrokerError::MalformedRow { line, reason };
        let time = NaiveDateTime::parse_from_str(&record[0], TIME_FORMAT)
            .map_err(|e| bad(format!("bad time: {e}")))?;
        let event = EventKind::parse(&record[1]).map_err(bad)?;
        let order_id: u64 = record[2].parse().map_err(|e| bad(format!("bad id: {e}")))?;
        let side = Side::parse(&record[3]).map_err(bad)?;
        let volume: f64 = record[4]
            .parse()
            .map_err(|e| bad(format!("bad volume: {e}")))?;
        let price: f64 = record[5]
            .parse()
            .map_err(|e| bad(format!("bad price: {e}")))?;
        let realized_pnl = if record[6].is_empty() {
            None
        } else {
            Some(
                record[6]
                    .parse()
                    .map_err(|e| bad(format!("bad pnl: {e}")))?,
            )
        };
        let balance: f64 = record[7]
            .parse()
            .map_err(|e| bad(format!("bad balance: {e}")))?;
        events.push(TradeEvent {
            time,
            event,
            order_id,
            side,
            volume,
            price,
            realized_pnl,
            balance,
        });
    }
    Ok(events)
}

/// Replays a trade log against a fresh account, reconstructing the final
/// state exactly.
pub fn replay_trade_log(
    events: &[TradeEvent],
    initial_balance: f64,
    contract_multiplier: f64,
    limits: AccountLimits,
) -> Result<AccountState, BrokerError> {
    let mut account = AccountState::new(initial_balance, contract_multiplier, limits)?;
    for e in events {
        match e.event {
            EventKind::Open => {
                let replayed = account.open_order(e.side, e.volume, e.price, e.time)?;
                if replayed.order_id != e.order_id {
                    return Err(BrokerError::Invalid(format!(
                        "replay id {} diverged from log id {}",
                        replayed.order_id, e.order_id
                    )));
                }
            }
            EventKind::Close => {
                account.close_order(e.order_id, e.price, e.time)?;
            }
            EventKind::ForceClose => {
                account.force_close_order(e.order_id, e.price, e.time)?;
            }
        }
    }
    Ok(account)
}
