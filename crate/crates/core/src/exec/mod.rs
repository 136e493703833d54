//! Order placement, fill simulation against recorded trades and quotes, and
//! XBT accounting.

mod ledger;

use std::collections::{BTreeMap, HashMap};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{contract_pnl, position_pnl, EquityPoint, Ledger, Position, SymbolPnl};

use crate::contract::{ContractBook, ContractError, ContractSpec, Symbol};
use crate::data::{QuoteTick, TradeTick};
use crate::signals::{SignalEvent, SignalKind};
use crate::spread::SpreadDef;
use crate::time::{Timestamp, MINUTES_PER_HOUR};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no contract spec for {0}")]
    UnknownSymbol(Symbol),
    #[error("{symbol}: non-positive price")]
    NonPositivePrice { symbol: Symbol },
    #[error("{symbol}: no quote at or before {ts}")]
    DataGap { symbol: Symbol, ts: Timestamp },
    #[error("{symbol}: latest quote is {age} minutes old")]
    StaleQuote { symbol: Symbol, age: i64 },
    #[error("{symbol}: position of {size} contracts left open at {ts}")]
    NotFlat {
        symbol: Symbol,
        size: i64,
        ts: Timestamp,
    },
    #[error("trading span {start}..{end} is empty")]
    EmptySpan { start: Timestamp, end: Timestamp },
    #[error(transparent)]
    Contract(#[from] ContractError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Buy => "Buy",
            Side::Sell => "Sell",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Liquidity {
    Maker,
    Taker,
}

impl Liquidity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Liquidity::Maker => "Maker",
            Liquidity::Taker => "Taker",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub symbol: Symbol,
    pub side: Side,
    pub kind: OrderKind,
    pub limit_price: Option<f64>,
    pub size: u64,
    pub remaining: u64,
    pub placed_at: Timestamp,
    pub expires_at: Timestamp,
    /// Close-out orders fill in full regardless of displayed size.
    pub force: bool,
    /// Set when a limit order timed out and became a market order.
    pub converted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub order_id: u64,
    /// Minute the order was placed.
    pub placed_at: Timestamp,
    pub ts: Timestamp,
    pub symbol: Symbol,
    pub side: Side,
    pub price: f64,
    pub size: u64,
    /// Positive is a cost, negative a rebate.
    pub fee_xbt: f64,
    pub liquidity: Liquidity,
}

/// Positive `amount_xbt` is paid by the account.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundingEvent {
    pub ts: Timestamp,
    pub symbol: Symbol,
    pub position: i64,
    pub mark_price: f64,
    pub amount_xbt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FillPolicy {
    /// Move unfilled limit prices to the current best bid/ask every minute.
    pub repeg: bool,
    pub timeout_minutes: i64,
    pub max_quote_age_minutes: i64,
}

impl Default for FillPolicy {
    fn default() -> Self {
        FillPolicy {
            repeg: true,
            timeout_minutes: 30,
            max_quote_age_minutes: 1,
        }
    }
}

impl FillPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_minutes < 1 {
            return Err("fill timeout must be at least one minute".into());
        }
        if self.max_quote_age_minutes < 0 {
            return Err("quote age limit must be non-negative".into());
        }
        Ok(())
    }
}

/// Recorded quotes and trades for one symbol, both sorted by time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolMarket {
    pub quotes: Vec<QuoteTick>,
    pub trades: Vec<TradeTick>,
}

pub type Market = BTreeMap<Symbol, SymbolMarket>;

fn fee_for(spec: &ContractSpec, size: u64, price: f64, liquidity: Liquidity) -> f64 {
    let rate = match liquidity {
        Liquidity::Maker => spec.maker_fee_rate,
        Liquidity::Taker => spec.taker_fee_rate,
    };
    spec.notional_xbt(size as f64, price) * rate
}

/// Funding owed at `ts` on a position, or `None` off the funding schedule.
/// Longs pay a positive rate.
pub fn funding_accrual(
    pos: &Position,
    mark_price: f64,
    spec: &ContractSpec,
    ts: Timestamp,
) -> Option<FundingEvent> {
    if !spec.is_perpetual() || pos.size == 0 {
        return None;
    }
    let period = spec.funding_interval_hours as i64 * MINUTES_PER_HOUR;
    if ts.minutes().rem_euclid(period) != 0 {
        return None;
    }
    let amount = spec.notional_xbt(pos.size as f64, mark_price)
        * spec.funding_rate
        * pos.size.signum() as f64;
    Some(FundingEvent {
        ts,
        symbol: pos.symbol.clone(),
        position: pos.size,
        mark_price,
        amount_xbt: amount,
    })
}

/// Signed contract targets for holding `direction` (+1 long, -1 short,
/// 0 flat) units of `lot` spreads. Inverse legs flip sign because a long
/// contract is short the XBT-valued series.
pub fn target_contracts(
    spread: &SpreadDef,
    lot: i64,
    direction: i64,
    book: &ContractBook,
) -> Result<BTreeMap<Symbol, i64>, ExecError> {
    let mut out = BTreeMap::new();
    for leg in &spread.legs {
        let spec = book.get(&leg.symbol)?;
        let n = (direction as f64 * leg.weight * lot as f64 * spec.exposure_sign()).round() as i64;
        out.insert(leg.symbol.clone(), n);
    }
    Ok(out)
}

pub fn direction_after(kind: SignalKind) -> i64 {
    match kind {
        SignalKind::EnterLong => 1,
        SignalKind::EnterShort => -1,
        SignalKind::ExitLong | SignalKind::ExitShort => 0,
    }
}

/// Passive limit orders moving each leg from its current position to the
/// target implied by `event`. Buys rest at the bid, sells at the ask. Every
/// leg needs a quote no older than the policy allows.
#[allow(clippy::too_many_arguments)]
pub fn quote_for_signal(
    event: &SignalEvent,
    spread: &SpreadDef,
    lot: i64,
    ledger: &Ledger,
    quotes: &BTreeMap<Symbol, QuoteTick>,
    now: Timestamp,
    policy: &FillPolicy,
    book: &ContractBook,
) -> Result<Vec<Order>, ExecError> {
    let targets = target_contracts(spread, lot, direction_after(event.kind), book)?;
    for sym in targets.keys() {
        let q = quotes.get(sym).ok_or_else(|| ExecError::DataGap {
            symbol: sym.clone(),
            ts: now,
        })?;
        let age = now - q.ts;
        if age > policy.max_quote_age_minutes {
            return Err(ExecError::StaleQuote {
                symbol: sym.clone(),
                age,
            });
        }
    }
    let mut orders = Vec::new();
    for (sym, target) in targets {
        let delta = target - ledger.position_size(&sym);
        if delta == 0 {
            continue;
        }
        let q = &quotes[&sym];
        let spec = book.get(&sym)?;
        let (side, price) = if delta > 0 {
            (Side::Buy, q.bid_price)
        } else {
            (Side::Sell, q.ask_price)
        };
        orders.push(Order {
            id: 0,
            symbol: sym,
            side,
            kind: OrderKind::Limit,
            limit_price: Some(spec.snap_to_tick(price)),
            size: delta.unsigned_abs(),
            remaining: delta.unsigned_abs(),
            placed_at: now,
            expires_at: now + policy.timeout_minutes,
            force: false,
            converted: false,
        });
    }
    Ok(orders)
}

/// Minute-by-minute matcher. Feed it strictly increasing minutes.
pub struct FillEngine<'a> {
    book: &'a ContractBook,
    market: &'a Market,
    tracked: Vec<(&'a Symbol, &'a SymbolMarket)>,
    policy: FillPolicy,
    quote_cursor: HashMap<Symbol, usize>,
    trade_cursor: HashMap<Symbol, usize>,
    latest: BTreeMap<Symbol, QuoteTick>,
    open: Vec<Order>,
    next_id: u64,
    now: Option<Timestamp>,
    pub orders_placed: usize,
    pub market_conversions: usize,
}

impl<'a> FillEngine<'a> {
    pub fn new(book: &'a ContractBook, market: &'a Market, policy: FillPolicy) -> Self {
        Self::with_tracked(book, market, policy, market.iter().collect())
    }

    /// Follows quotes for `symbols` only; the rest of `market` is ignored.
    pub fn for_symbols(
        book: &'a ContractBook,
        market: &'a Market,
        policy: FillPolicy,
        symbols: &[Symbol],
    ) -> Self {
        let tracked = market.iter().filter(|(s, _)| symbols.contains(s)).collect();
        Self::with_tracked(book, market, policy, tracked)
    }

    fn with_tracked(
        book: &'a ContractBook,
        market: &'a Market,
        policy: FillPolicy,
        tracked: Vec<(&'a Symbol, &'a SymbolMarket)>,
    ) -> Self {
        FillEngine {
            book,
            market,
            tracked,
            policy,
            quote_cursor: HashMap::new(),
            trade_cursor: HashMap::new(),
            latest: BTreeMap::new(),
            open: Vec::new(),
            next_id: 1,
            now: None,
            orders_placed: 0,
            market_conversions: 0,
        }
    }

    pub fn latest_quotes(&self) -> &BTreeMap<Symbol, QuoteTick> {
        &self.latest
    }

    pub fn open_orders(&self) -> &[Order] {
        &self.open
    }

    /// Quote no older than the policy limit at the current minute.
    pub fn fresh_quote(&self, symbol: &Symbol) -> Option<&QuoteTick> {
        let now = self.now?;
        self.latest
            .get(symbol)
            .filter(|q| now - q.ts <= self.policy.max_quote_age_minutes)
    }

    pub fn submit(&mut self, mut order: Order) -> u64 {
        order.id = self.next_id;
        self.next_id += 1;
        self.orders_placed += 1;
        let id = order.id;
        self.open.push(order);
        id
    }

    pub fn cancel_all(&mut self) {
        self.open.clear();
    }

    /// Advances to `ts`: refreshes quotes, matches open orders, then re-pegs
    /// what is left. Returns the fills in order-id order.
    pub fn step(&mut self, ts: Timestamp) -> Result<Vec<Fill>, ExecError> {
        self.advance_quotes(ts);
        self.now = Some(ts);
        let mut fills = Vec::new();
        // Volume already taken from this minute's prints and quotes.
        let mut used_trades: HashMap<(Symbol, Side), f64> = HashMap::new();
        let mut used_quotes: HashMap<(Symbol, Side), f64> = HashMap::new();
        let mut open = std::mem::take(&mut self.open);

        for order in open.iter_mut() {
            if order.placed_at >= ts {
                continue;
            }
            let spec = self.book.get(&order.symbol)?;
            if order.kind == OrderKind::Limit && ts >= order.expires_at {
                order.kind = OrderKind::Market;
                order.converted = true;
                self.market_conversions += 1;
                debug!(
                    "{} order {} timed out at {ts}, converting to market",
                    order.symbol, order.id
                );
            }
            match order.kind {
                OrderKind::Limit => {
                    let limit = order.limit_price.expect("limit order carries a price");
                    // Prices are compared on the tick grid, not bit for bit.
                    let eps = spec.tick_size * 1e-6;
                    let trades = self.trades_at(&order.symbol, ts);
                    let eligible: f64 = trades
                        .iter()
                        .filter(|t| match order.side {
                            Side::Buy => t.price <= limit + eps,
                            Side::Sell => t.price >= limit - eps,
                        })
                        .map(|t| t.size)
                        .sum();
                    let used = used_trades
                        .entry((order.symbol.clone(), order.side))
                        .or_insert(0.0);
                    let avail = (eligible - *used).max(0.0).floor() as u64;
                    let q = avail.min(order.remaining);
                    if q > 0 {
                        *used += q as f64;
                        order.remaining -= q;
                        fills.push(Fill {
                            order_id: order.id,
                            placed_at: order.placed_at,
                            ts,
                            symbol: order.symbol.clone(),
                            side: order.side,
                            price: limit,
                            size: q,
                            fee_xbt: fee_for(spec, q, limit, Liquidity::Maker),
                            liquidity: Liquidity::Maker,
                        });
                    }
                }
                OrderKind::Market => {
                    let quote =
                        self.fresh_quote(&order.symbol)
                            .ok_or_else(|| ExecError::DataGap {
                                symbol: order.symbol.clone(),
                                ts,
                            })?;
                    let (price, shown) = match order.side {
                        Side::Buy => (quote.ask_price, quote.ask_size),
                        Side::Sell => (quote.bid_price, quote.bid_size),
                    };
                    let q = if order.force {
                        order.remaining
                    } else {
                        let used = used_quotes
                            .entry((order.symbol.clone(), order.side))
                            .or_insert(0.0);
                        let q = ((shown - *used).max(0.0).floor() as u64).min(order.remaining);
                        *used += q as f64;
                        q
                    };
                    if q > 0 {
                        order.remaining -= q;
                        fills.push(Fill {
                            order_id: order.id,
                            placed_at: order.placed_at,
                            ts,
                            symbol: order.symbol.clone(),
                            side: order.side,
                            price,
                            size: q,
                            fee_xbt: fee_for(spec, q, price, Liquidity::Taker),
                            liquidity: Liquidity::Taker,
                        });
                    }
                }
            }
        }

        open.retain(|o| o.remaining > 0);
        if self.policy.repeg {
            for order in open.iter_mut().filter(|o| o.kind == OrderKind::Limit) {
                if let Some(q) = self.fresh_quote(&order.symbol) {
                    let spec = self.book.get(&order.symbol)?;
                    let p = match order.side {
                        Side::Buy => q.bid_price,
                        Side::Sell => q.ask_price,
                    };
                    order.limit_price = Some(spec.snap_to_tick(p));
                }
            }
        }
        self.open = open;
        Ok(fills)
    }

    fn advance_quotes(&mut self, ts: Timestamp) {
        for &(sym, m) in &self.tracked {
            let cur = self
                .quote_cursor
                .entry(sym.clone())
                .or_insert_with(|| m.quotes.partition_point(|q| q.ts < ts).saturating_sub(1));
            let mut i = *cur;
            let mut last = None;
            while i < m.quotes.len() && m.quotes[i].ts <= ts {
                last = Some(i);
                i += 1;
            }
            if let Some(j) = last {
                self.latest.insert(sym.clone(), m.quotes[j].clone());
                *cur = j + 1;
            }
        }
    }

    fn trades_at(&mut self, symbol: &Symbol, ts: Timestamp) -> &'a [TradeTick] {
        let Some(m) = self.market.get(symbol) else {
            return &[];
        };
        let cur = self.trade_cursor.entry(symbol.clone()).or_insert(0);
        if *cur >= m.trades.len() || m.trades[*cur].ts > ts {
            *cur = m.trades.partition_point(|t| t.ts < ts);
        }
        while *cur < m.trades.len() && m.trades[*cur].ts < ts {
            *cur += 1;
        }
        let end = *cur + m.trades[*cur..].partition_point(|t| t.ts <= ts);
        &m.trades[*cur..end]
    }
}

/// A spread to trade over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPlan {
    pub spread: SpreadDef,
    pub lot: i64,
    pub events: Vec<SignalEvent>,
    pub trading_start: Timestamp,
    pub trading_end: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSignal {
    pub ts: Timestamp,
    pub kind: SignalKind,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowRun {
    pub ledger: Ledger,
    pub orders_placed: usize,
    pub market_conversions: usize,
    pub executed: Vec<SignalEvent>,
    pub skipped: Vec<SkippedSignal>,
    pub mark_gaps: usize,
}

/// Contracts for one spread unit at a target XBT exposure, at least one.
pub fn lot_size(target_xbt: f64, unit_value_xbt: f64) -> i64 {
    if unit_value_xbt > 0.0 && target_xbt > 0.0 {
        ((target_xbt / unit_value_xbt).round() as i64).max(1)
    } else {
        1
    }
}

/// Runs one trading window minute by minute over [start, end]: quotes,
/// fills, funding, new signals, then the mark. Whatever is open one minute
/// before the end is closed with market orders that fill at the end.
pub fn simulate_window(
    plan: &WindowPlan,
    book: &ContractBook,
    market: &Market,
    policy: &FillPolicy,
    initial_capital: f64,
) -> Result<WindowRun, ExecError> {
    let (start, end) = (plan.trading_start, plan.trading_end);
    if end - start < 1 {
        return Err(ExecError::EmptySpan { start, end });
    }
    let mut engine = FillEngine::for_symbols(book, market, *policy, &plan.spread.symbols());
    let mut ledger = Ledger::new(initial_capital);
    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut mark_gaps = 0;
    let mut events = plan.events.iter().peekable();
    let close_at = end - 1;
    let spec_of = |s: &Symbol| book.get(s).cloned().map_err(ExecError::from);

    let mut ts = start;
    while ts <= end {
        for fill in engine.step(ts)? {
            let spec = book.get(&fill.symbol)?;
            ledger.apply_fill(fill, spec)?;
        }

        let due: Vec<FundingEvent> = ledger
            .positions
            .values()
            .filter_map(|pos| {
                let spec = book.get(&pos.symbol).ok()?;
                let mark = engine.latest_quotes().get(&pos.symbol)?.mid();
                funding_accrual(pos, mark, spec, ts)
            })
            .collect();
        for ev in due {
            ledger.apply_funding(ev);
        }

        if ts == close_at {
            engine.cancel_all();
            for ev in events.by_ref() {
                skipped.push(SkippedSignal {
                    ts: ev.ts,
                    kind: ev.kind,
                    reason: "at window close".into(),
                });
            }
            let open: Vec<Position> = ledger.positions.values().cloned().collect();
            for pos in open {
                let side = if pos.size > 0 { Side::Sell } else { Side::Buy };
                engine.submit(Order {
                    id: 0,
                    symbol: pos.symbol.clone(),
                    side,
                    kind: OrderKind::Market,
                    limit_price: None,
                    size: pos.size.unsigned_abs(),
                    remaining: pos.size.unsigned_abs(),
                    placed_at: ts,
                    expires_at: ts,
                    force: true,
                    converted: false,
                });
            }
        } else if ts < close_at {
            while let Some(ev) = events.next_if(|e| e.ts <= ts) {
                if ev.ts < ts {
                    skipped.push(SkippedSignal {
                        ts: ev.ts,
                        kind: ev.kind,
                        reason: "before trading start".into(),
                    });
                    continue;
                }
                match quote_for_signal(
                    ev,
                    &plan.spread,
                    plan.lot,
                    &ledger,
                    engine.latest_quotes(),
                    ts,
                    policy,
                    book,
                ) {
                    Ok(orders) => {
                        engine.cancel_all();
                        for o in orders {
                            engine.submit(o);
                        }
                        executed.push(*ev);
                    }
                    Err(e @ (ExecError::StaleQuote { .. } | ExecError::DataGap { .. })) => {
                        warn!("skipping {} at {ts}: {e}", ev.kind.as_str());
                        skipped.push(SkippedSignal {
                            ts,
                            kind: ev.kind,
                            reason: e.to_string(),
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        let marks: BTreeMap<Symbol, f64> = ledger
            .positions
            .keys()
            .filter_map(|s| engine.fresh_quote(s).map(|q| (s.clone(), q.mid())))
            .collect();
        if ledger.mark(ts, &marks, &spec_of)?.gap {
            mark_gaps += 1;
        }
        ts = ts + 1;
    }

    if let Some(pos) = ledger.positions.values().next() {
        return Err(ExecError::NotFlat {
            symbol: pos.symbol.clone(),
            size: pos.size,
            ts: end,
        });
    }
    Ok(WindowRun {
        ledger,
        orders_placed: engine.orders_placed,
        market_conversions: engine.market_conversions,
        executed,
        skipped,
        mark_gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractKind;
    use crate::spread::Leg;

    fn t(m: i64) -> Timestamp {
        Timestamp::from_minutes(m)
    }

    fn quote(sym: &str, m: i64, bid: f64, ask: f64) -> QuoteTick {
        QuoteTick {
            ts: t(m),
            symbol: sym.into(),
            bid_price: bid,
            bid_size: 1000.0,
            ask_price: ask,
            ask_size: 1000.0,
        }
    }

    fn trade(sym: &str, m: i64, price: f64, size: f64) -> TradeTick {
        TradeTick {
            ts: t(m),
            symbol: sym.into(),
            price,
            size,
        }
    }

    fn book() -> ContractBook {
        let mut b = ContractBook::new();
        b.insert(ContractSpec::new("AAA", ContractKind::Linear, 1.0, 1e-4));
        b.insert(ContractSpec::new("BBB", ContractKind::Linear, 1.0, 1e-4));
        b
    }

    fn flat_market(len: i64) -> Market {
        let mut m = Market::new();
        for sym in ["AAA", "BBB"] {
            let quotes = (0..len).map(|i| quote(sym, i, 0.0999, 0.1001)).collect();
            m.insert(
                sym.into(),
                SymbolMarket {
                    quotes,
                    trades: vec![],
                },
            );
        }
        m
    }

    fn limit(sym: &str, side: Side, price: f64, size: u64, at: i64) -> Order {
        Order {
            id: 0,
            symbol: sym.into(),
            side,
            kind: OrderKind::Limit,
            limit_price: Some(price),
            size,
            remaining: size,
            placed_at: t(at),
            expires_at: t(at + 30),
            force: false,
            converted: false,
        }
    }

    #[test]
    fn limit_fills_only_on_crossing_print_after_placement() {
        let mut m = flat_market(10);
        m.get_mut(&Symbol::from("AAA")).unwrap().trades = vec![
            trade("AAA", 0, 0.0990, 50.0),
            trade("AAA", 2, 0.1000, 50.0),
            trade("AAA", 3, 0.0999, 4.0),
            trade("AAA", 4, 0.0998, 10.0),
        ];
        let b = book();
        let policy = FillPolicy {
            repeg: false,
            ..Default::default()
        };
        let mut e = FillEngine::new(&b, &m, policy);
        e.step(t(0)).unwrap();
        e.submit(limit("AAA", Side::Buy, 0.0999, 10, 0));
        assert!(e.step(t(1)).unwrap().is_empty());
        // Print above the limit does not fill a buy.
        assert!(e.step(t(2)).unwrap().is_empty());
        let f = e.step(t(3)).unwrap();
        assert_eq!(
            (f[0].size, f[0].price, f[0].liquidity),
            (4, 0.0999, Liquidity::Maker)
        );
        let f = e.step(t(4)).unwrap();
        assert_eq!(f[0].size, 6);
        assert!(e.open_orders().is_empty());
        assert!(f[0].fee_xbt < 0.0);
    }

    #[test]
    fn timeout_converts_to_taker_at_opposite_quote() {
        let m = flat_market(40);
        let b = book();
        let mut e = FillEngine::new(&b, &m, FillPolicy::default());
        e.step(t(0)).unwrap();
        e.submit(limit("AAA", Side::Sell, 0.1001, 5, 0));
        for i in 1..30 {
            assert!(e.step(t(i)).unwrap().is_empty());
        }
        let f = e.step(t(30)).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].price, f[0].liquidity), (0.0999, Liquidity::Taker));
        assert!((f[0].fee_xbt - 5.0 * 0.0999 * 0.00075).abs() < 1e-15);
        assert_eq!(e.market_conversions, 1);
    }

    #[test]
    fn market_order_without_quote_is_a_gap() {
        let m = flat_market(3);
        let b = book();
        let mut e = FillEngine::new(&b, &m, FillPolicy::default());
        e.step(t(0)).unwrap();
        let mut o = limit("AAA", Side::Buy, 0.1, 1, 0);
        o.kind = OrderKind::Market;
        e.submit(o);
        assert!(matches!(e.step(t(10)), Err(ExecError::DataGap { .. })));
    }

    #[test]
    fn funding_schedule_and_sign() {
        let spec = ContractSpec::new("XBTUSD", ContractKind::Inverse, 1.0, 0.5).perpetual();
        let pos = Position {
            symbol: "XBTUSD".into(),
            size: 1000,
            entry_price: 10_000.0,
            opened_at: t(0),
        };
        assert!(funding_accrual(&pos, 10_000.0, &spec, t(8 * 60 + 1)).is_none());
        let ev = funding_accrual(&pos, 10_000.0, &spec, t(8 * 60)).unwrap();
        assert!((ev.amount_xbt - 0.1 * 0.0001).abs() < 1e-18);
        let short = Position {
            size: -1000,
            ..pos.clone()
        };
        assert!(
            funding_accrual(&short, 10_000.0, &spec, t(16 * 60))
                .unwrap()
                .amount_xbt
                < 0.0
        );
        let fut = ContractSpec::new("XBTZ19", ContractKind::Inverse, 1.0, 0.5);
        assert!(funding_accrual(&pos, 10_000.0, &fut, t(0)).is_none());
    }

    #[test]
    fn targets_follow_weights_and_exposure() {
        let mut b = book();
        b.insert(ContractSpec::new("XBTUSD", ContractKind::Inverse, 1.0, 0.5));
        let spread = SpreadDef {
            legs: vec![
                Leg {
                    symbol: "AAA".into(),
                    weight: 2.0,
                },
                Leg {
                    symbol: "XBTUSD".into(),
                    weight: -3.0,
                },
            ],
            intercept: 0.0,
            raw: false,
        };
        let tg = target_contracts(&spread, 5, -1, &b).unwrap();
        assert_eq!(tg[&Symbol::from("AAA")], -10);
        assert_eq!(tg[&Symbol::from("XBTUSD")], -15);
    }

    #[test]
    fn stale_quotes_block_orders() {
        let b = book();
        let spread = SpreadDef {
            legs: vec![
                Leg {
                    symbol: "AAA".into(),
                    weight: 1.0,
                },
                Leg {
                    symbol: "BBB".into(),
                    weight: -1.0,
                },
            ],
            intercept: 0.0,
            raw: false,
        };
        let mut quotes = BTreeMap::new();
        quotes.insert(Symbol::from("AAA"), quote("AAA", 10, 0.1, 0.2));
        quotes.insert(Symbol::from("BBB"), quote("BBB", 7, 0.1, 0.2));
        let ev = SignalEvent {
            ts: t(10),
            kind: SignalKind::EnterLong,
            z_tminus1: -1.9,
            z_tminus2: -2.1,
        };
        let r = quote_for_signal(
            &ev,
            &spread,
            1,
            &Ledger::new(1.0),
            &quotes,
            t(10),
            &FillPolicy::default(),
            &b,
        );
        assert!(matches!(r, Err(ExecError::StaleQuote { age: 3, .. })));
        quotes.insert(Symbol::from("BBB"), quote("BBB", 9, 0.1, 0.2));
        let orders = quote_for_signal(
            &ev,
            &spread,
            1,
            &Ledger::new(1.0),
            &quotes,
            t(10),
            &FillPolicy::default(),
            &b,
        )
        .unwrap();
        assert_eq!(orders.len(), 2);
        assert_eq!(
            (orders[0].side, orders[0].limit_price),
            (Side::Buy, Some(0.1))
        );
        assert_eq!(
            (orders[1].side, orders[1].limit_price),
            (Side::Sell, Some(0.2))
        );
    }

    #[test]
    fn window_closes_flat() {
        let mut m = flat_market(120);
        for (sym, px) in [("AAA", 0.0999), ("BBB", 0.1001)] {
            m.get_mut(&Symbol::from(sym)).unwrap().trades =
                (0..120).map(|i| trade(sym, i, px, 3.0)).collect();
        }
        let b = book();
        let spread = SpreadDef {
            legs: vec![
                Leg {
                    symbol: "AAA".into(),
                    weight: 1.0,
                },
                Leg {
                    symbol: "BBB".into(),
                    weight: -1.0,
                },
            ],
            intercept: 0.0,
            raw: false,
        };
        let plan = WindowPlan {
            spread,
            lot: 10,
            events: vec![SignalEvent {
                ts: t(5),
                kind: SignalKind::EnterLong,
                z_tminus1: -1.9,
                z_tminus2: -2.1,
            }],
            trading_start: t(0),
            trading_end: t(100),
        };
        let run = simulate_window(&plan, &b, &m, &FillPolicy::default(), 1.0).unwrap();
        assert!(run.ledger.is_flat());
        assert_eq!(run.executed.len(), 1);
        assert!(run.ledger.identity_gap().abs() < 1e-12);
        // Both legs filled as maker in 3-lot slices, then closed as taker.
        let maker: u64 = run
            .ledger
            .fills
            .iter()
            .filter(|f| f.liquidity == Liquidity::Maker)
            .map(|f| f.size)
            .sum();
        assert_eq!(maker, 20);
        assert!(run
            .ledger
            .fills
            .iter()
            .any(|f| f.liquidity == Liquidity::Taker && f.ts == t(100)));
        assert_eq!(run.ledger.equity_curve.len(), 101);
    }
}
