//! Instrument descriptions: payout kind, tick grid and fee schedule.
//!
//! All P&L on the venue is settled in XBT. A contract's *native* price is what
//! the exchange quotes (USD for inverse and quanto contracts, XBT for linear
//! ones); [`ContractSpec::to_xbt`] maps it to the XBT-denominated series used
//! by the statistics modules.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maker rebate on perpetual and futures contracts (negative fee).
pub const MAKER_FEE_RATE: f64 = -0.00025;
/// Taker fee, identical for every contract.
pub const TAKER_FEE_RATE: f64 = 0.00075;
/// Magnitude of the perpetual funding rate.
pub const FUNDING_RATE: f64 = 0.0001;
pub const FUNDING_INTERVAL_HOURS: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(String);

impl Symbol {
    pub fn new(name: impl Into<String>) -> Self {
        Symbol(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol(s.to_string())
    }
}

impl From<String> for Symbol {
    fn from(s: String) -> Self {
        Symbol(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    /// Quoted and settled in XBT.
    Linear,
    /// Quoted in USD, each contract worth one USD of XBT.
    Inverse,
    /// Quoted in USD with a fixed XBT multiplier per unit price move.
    Quanto,
}

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("{symbol}: tick size must be positive, got {tick}")]
    BadTick { symbol: Symbol, tick: f64 },
    #[error("{symbol}: multiplier must be positive, got {multiplier}")]
    BadMultiplier { symbol: Symbol, multiplier: f64 },
    #[error("{symbol}: price must be positive, got {price}")]
    NonPositivePrice { symbol: Symbol, price: f64 },
    #[error("no contract spec for {0}")]
    Unknown(Symbol),
    #[error("reading contract file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing contract file: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub symbol: Symbol,
    pub kind: ContractKind,
    pub multiplier: f64,
    pub tick_size: f64,
    pub maker_fee_rate: f64,
    pub taker_fee_rate: f64,
    pub funding_rate: f64,
    /// Zero for contracts that never pay funding (futures).
    pub funding_interval_hours: u32,
}

impl ContractSpec {
    /// A venue-default contract: maker rebate, taker fee, and for perpetuals the
    /// standard eight-hourly funding.
    pub fn new(
        symbol: impl Into<Symbol>,
        kind: ContractKind,
        multiplier: f64,
        tick_size: f64,
    ) -> Self {
        ContractSpec {
            symbol: symbol.into(),
            kind,
            multiplier,
            tick_size,
            maker_fee_rate: MAKER_FEE_RATE,
            taker_fee_rate: TAKER_FEE_RATE,
            funding_rate: 0.0,
            funding_interval_hours: 0,
        }
    }

    pub fn perpetual(mut self) -> Self {
        self.funding_rate = FUNDING_RATE;
        self.funding_interval_hours = FUNDING_INTERVAL_HOURS;
        self
    }

    pub fn is_perpetual(&self) -> bool {
        self.funding_interval_hours > 0
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if !(self.tick_size > 0.0) {
            return Err(ContractError::BadTick {
                symbol: self.symbol.clone(),
                tick: self.tick_size,
            });
        }
        if !(self.multiplier > 0.0) {
            return Err(ContractError::BadMultiplier {
                symbol: self.symbol.clone(),
                multiplier: self.multiplier,
            });
        }
        Ok(())
    }

    /// True when `price` lies on the tick grid, up to `tick_size * 1e-6`.
    pub fn on_tick_grid(&self, price: f64) -> bool {
        let steps = (price / self.tick_size).round();
        (price - steps * self.tick_size).abs() <= self.tick_size * 1e-6
    }

    pub fn snap_to_tick(&self, price: f64) -> f64 {
        (price / self.tick_size).round() * self.tick_size
    }

    /// XBT value of one unit of the native price series.
    pub fn to_xbt(&self, price: f64) -> Result<f64, ContractError> {
        if !(price > 0.0) || !price.is_finite() {
            return Err(ContractError::NonPositivePrice {
                symbol: self.symbol.clone(),
                price,
            });
        }
        Ok(match self.kind {
            ContractKind::Linear => price,
            ContractKind::Quanto => price * self.multiplier,
            ContractKind::Inverse => 1.0 / price,
        })
    }

    /// Inverse of [`to_xbt`](Self::to_xbt).
    pub fn from_xbt(&self, value: f64) -> f64 {
        match self.kind {
            ContractKind::Linear => value,
            ContractKind::Quanto => value / self.multiplier,
            ContractKind::Inverse => 1.0 / value,
        }
    }

    /// +1 when a long contract position is long the XBT-denominated series,
    /// -1 for inverse contracts (long XBTUSD is short the USD valued in XBT).
    pub fn exposure_sign(&self) -> f64 {
        match self.kind {
            ContractKind::Inverse => -1.0,
            ContractKind::Linear | ContractKind::Quanto => 1.0,
        }
    }

    /// Absolute XBT notional of `contracts` at `price`.
    pub fn notional_xbt(&self, contracts: f64, price: f64) -> f64 {
        let c = contracts.abs();
        match self.kind {
            ContractKind::Linear | ContractKind::Quanto => c * self.multiplier * price,
            ContractKind::Inverse => c * self.multiplier / price,
        }
    }
}

/// Per-symbol entry of the contract config file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractEntry {
    kind: ContractKind,
    #[serde(default = "one")]
    multiplier: f64,
    tick_size: f64,
    #[serde(default = "default_maker")]
    maker_fee: f64,
    #[serde(default = "default_taker")]
    taker_fee: f64,
    #[serde(default = "default_funding")]
    funding_rate: f64,
    #[serde(default)]
    funding_interval_hours: u32,
}

fn one() -> f64 {
    1.0
}
fn default_maker() -> f64 {
    MAKER_FEE_RATE
}
fn default_taker() -> f64 {
    TAKER_FEE_RATE
}
fn default_funding() -> f64 {
    FUNDING_RATE
}

/// The instrument universe, keyed by symbol.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractBook {
    specs: BTreeMap<Symbol, ContractSpec>,
}

impl ContractBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: ContractSpec) {
        self.specs.insert(spec.symbol.clone(), spec);
    }

    pub fn get(&self, symbol: &Symbol) -> Result<&ContractSpec, ContractError> {
        self.specs
            .get(symbol)
            .ok_or_else(|| ContractError::Unknown(symbol.clone()))
    }

    pub fn get_mut(&mut self, symbol: &Symbol) -> Option<&mut ContractSpec> {
        self.specs.get_mut(symbol)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.specs.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContractSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Parses the TOML contract file: one table per symbol with keys `kind`,
    /// `multiplier`, `tick_size`, `maker_fee`, `taker_fee`, `funding_rate`,
    /// `funding_interval_hours`.
    pub fn from_toml_str(text: &str) -> Result<Self, ContractError> {
        let entries: BTreeMap<String, ContractEntry> = toml::from_str(text)?;
        let mut book = ContractBook::new();
        for (name, e) in entries {
            let spec = ContractSpec {
                symbol: Symbol::new(name),
                kind: e.kind,
                multiplier: e.multiplier,
                tick_size: e.tick_size,
                maker_fee_rate: e.maker_fee,
                taker_fee_rate: e.taker_fee,
                funding_rate: if e.funding_interval_hours > 0 {
                    e.funding_rate
                } else {
                    0.0
                },
                funding_interval_hours: e.funding_interval_hours,
            };
            spec.validate()?;
            book.insert(spec);
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, ContractError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for spec in self.specs.values() {
            let kind = match spec.kind {
                ContractKind::Linear => "linear",
                ContractKind::Inverse => "inverse",
                ContractKind::Quanto => "quanto",
            };
            out.push_str(&format!(
                "[{}]\nkind = \"{}\"\nmultiplier = {:?}\ntick_size = {:?}\nmaker_fee = {:?}\ntaker_fee = {:?}\nfunding_rate = {:?}\nfunding_interval_hours = {}\n\n",
                spec.symbol,
                kind,
                spec.multiplier,
                spec.tick_size,
                spec.maker_fee_rate,
                spec.taker_fee_rate,
                spec.funding_rate,
                spec.funding_interval_hours
            ));
        }
        out
    }
}
