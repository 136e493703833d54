use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExecError, Fill, FundingEvent, Side};
use crate::contract::{ContractKind, ContractSpec, Symbol};
use crate::time::Timestamp;

/// Signed contract position with its average entry price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub symbol: Symbol,
    pub size: i64,
    pub entry_price: f64,
    pub opened_at: Timestamp,
}

/// XBT P&L of `size` contracts (negative = short) from `entry` to `exit`.
pub fn contract_pnl(
    size: i64,
    entry: f64,
    exit: f64,
    spec: &ContractSpec,
) -> Result<f64, ExecError> {
    if !(entry > 0.0) || !(exit > 0.0) {
        return Err(ExecError::NonPositivePrice {
            symbol: spec.symbol.clone(),
        });
    }
    let q = size as f64 * spec.multiplier;
    Ok(match spec.kind {
        ContractKind::Linear | ContractKind::Quanto => q * (exit - entry),
        ContractKind::Inverse => q * (1.0 / entry - 1.0 / exit),
    })
}

pub fn position_pnl(
    pos: &Position,
    exit_price: f64,
    spec: &ContractSpec,
) -> Result<f64, ExecError> {
    contract_pnl(pos.size, pos.entry_price, exit_price, spec)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolPnl {
    pub realized: f64,
    pub fees: f64,
    pub funding: f64,
}

impl SymbolPnl {
    pub fn net(&self) -> f64 {
        self.realized - self.fees - self.funding
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub ts: Timestamp,
    pub equity: f64,
    pub realized: f64,
    pub unrealized: f64,
    pub fees: f64,
    pub funding: f64,
    /// A mark price was carried forward for lack of a quote.
    pub gap: bool,
}

/// XBT accounting for one run. Fees and funding are positive when paid.
/// `cash` moves with every flow so that equity = cash + unrealized can be
/// checked against the component totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub initial_capital: f64,
    pub cash: f64,
    pub realized_pnl_xbt: f64,
    pub unrealized_pnl_xbt: f64,
    pub fees_xbt: f64,
    pub funding_xbt: f64,
    pub positions: BTreeMap<Symbol, Position>,
    pub fills: Vec<Fill>,
    pub funding_events: Vec<FundingEvent>,
    pub equity_curve: Vec<EquityPoint>,
    pub per_symbol: BTreeMap<Symbol, SymbolPnl>,
    marks: BTreeMap<Symbol, f64>,
}

impl Ledger {
    pub fn new(initial_capital: f64) -> Self {
        Ledger {
            initial_capital,
            cash: initial_capital,
            realized_pnl_xbt: 0.0,
            unrealized_pnl_xbt: 0.0,
            fees_xbt: 0.0,
            funding_xbt: 0.0,
            positions: BTreeMap::new(),
            fills: Vec::new(),
            funding_events: Vec::new(),
            equity_curve: Vec::new(),
            per_symbol: BTreeMap::new(),
            marks: BTreeMap::new(),
        }
    }

    pub fn equity(&self) -> f64 {
        self.cash + self.unrealized_pnl_xbt
    }

    /// Difference between cash-based equity and the component identity.
    pub fn identity_gap(&self) -> f64 {
        let components = self.initial_capital + self.realized_pnl_xbt + self.unrealized_pnl_xbt
            - self.fees_xbt
            - self.funding_xbt;
        self.equity() - components
    }

    pub fn is_flat(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position_size(&self, symbol: &Symbol) -> i64 {
        self.positions.get(symbol).map_or(0, |p| p.size)
    }

    /// Books a fill: fee, realised P&L on any reduced size, and the new
    /// average entry (harmonic for inverse contracts).
    pub fn apply_fill(&mut self, fill: Fill, spec: &ContractSpec) -> Result<f64, ExecError> {
        let signed = match fill.side {
            Side::Buy => fill.size as i64,
            Side::Sell => -(fill.size as i64),
        };
        let sym = fill.symbol.clone();
        let mut realized = 0.0;
        let current = self.positions.remove(&sym);
        let next = match current {
            None => Some(Position {
                symbol: sym.clone(),
                size: signed,
                entry_price: fill.price,
                opened_at: fill.ts,
            }),
            Some(pos) if pos.size.signum() == signed.signum() => {
                let (a, b) = (pos.size.unsigned_abs() as f64, signed.unsigned_abs() as f64);
                let entry = match spec.kind {
                    ContractKind::Inverse => (a + b) / (a / pos.entry_price + b / fill.price),
                    _ => (a * pos.entry_price + b * fill.price) / (a + b),
                };
                Some(Position {
                    size: pos.size + signed,
                    entry_price: entry,
                    ..pos
                })
            }
            Some(pos) => {
                let closing = pos.size.abs().min(signed.abs());
                realized = contract_pnl(
                    closing * pos.size.signum(),
                    pos.entry_price,
                    fill.price,
                    spec,
                )?;
                let remaining = pos.size + signed;
                if remaining == 0 {
                    None
                } else if remaining.signum() == pos.size.signum() {
                    Some(Position {
                        size: remaining,
                        ..pos
                    })
                } else {
                    Some(Position {
                        symbol: sym.clone(),
                        size: remaining,
                        entry_price: fill.price,
                        opened_at: fill.ts,
                    })
                }
            }
        };
        if let Some(p) = next {
            self.positions.insert(sym.clone(), p);
        }
        self.realized_pnl_xbt += realized;
        self.fees_xbt += fill.fee_xbt;
        self.cash += realized - fill.fee_xbt;
        let entry = self.per_symbol.entry(sym).or_default();
        entry.realized += realized;
        entry.fees += fill.fee_xbt;
        self.fills.push(fill);
        Ok(realized)
    }

    pub fn apply_funding(&mut self, event: FundingEvent) {
        self.funding_xbt += event.amount_xbt;
        self.cash -= event.amount_xbt;
        self.per_symbol
            .entry(event.symbol.clone())
            .or_default()
            .funding += event.amount_xbt;
        self.funding_events.push(event);
    }

    /// Revalues open positions at `marks` (native prices) and appends an
    /// equity point. Symbols without a mark keep their previous one.
    pub fn mark(
        &mut self,
        ts: Timestamp,
        marks: &BTreeMap<Symbol, f64>,
        specs: &dyn Fn(&Symbol) -> Result<ContractSpec, ExecError>,
    ) -> Result<&EquityPoint, ExecError> {
        let mut unrealized = 0.0;
        let mut gap = false;
        for (sym, pos) in &self.positions {
            let price = match marks.get(sym) {
                Some(p) => {
                    self.marks.insert(sym.clone(), *p);
                    *p
                }
                None => {
                    gap = true;
                    *self.marks.get(sym).unwrap_or(&pos.entry_price)
                }
            };
            unrealized += position_pnl(pos, price, &specs(sym)?)?;
        }
        self.unrealized_pnl_xbt = unrealized;
        self.equity_curve.push(EquityPoint {
            ts,
            equity: self.equity(),
            realized: self.realized_pnl_xbt,
            unrealized,
            fees: self.fees_xbt,
            funding: self.funding_xbt,
            gap,
        });
        Ok(self.equity_curve.last().expect("just pushed"))
    }
}
