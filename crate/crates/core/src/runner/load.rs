//! Data directory layout: `contracts.toml` plus one CSV per symbol under
//! `bars/`, `quotes/` and `trades/`, each named `<SYMBOL>.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::contract::{ContractBook, Symbol};
use crate::data::{
    parse_bar_csv, parse_quote_csv, parse_trade_csv, write_bar_csv, write_quote_csv,
    write_trade_csv, PriceBar,
};
use crate::exec::{Market, SymbolMarket};
use crate::panel::{align_panel, denominate_to_xbt, AlignedPanel};
use crate::synth::SymbolStreams;
use crate::time::Timestamp;

pub const CONTRACTS_FILE: &str = "contracts.toml";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRows {
    pub bars: usize,
    pub quotes: usize,
    pub trades: usize,
}

#[derive(Clone, Debug)]
pub struct MarketData {
    pub book: ContractBook,
    pub bars: BTreeMap<Symbol, Vec<PriceBar>>,
    pub market: Market,
    pub skipped: BTreeMap<Symbol, SkippedRows>,
}

pub fn bar_path(dir: &Path, s: &Symbol) -> PathBuf {
    dir.join("bars").join(format!("{s}.csv"))
}

pub fn quote_path(dir: &Path, s: &Symbol) -> PathBuf {
    dir.join("quotes").join(format!("{s}.csv"))
}

pub fn trade_path(dir: &Path, s: &Symbol) -> PathBuf {
    dir.join("trades").join(format!("{s}.csv"))
}

/// Loads `symbols` (default: every contract listed) from a data directory.
/// Quote and trade files are optional per symbol; without them the symbol
/// can be analysed but not traded.
pub fn load_data_dir(dir: &Path, symbols: Option<&[Symbol]>) -> Result<MarketData, RunError> {
    let book = ContractBook::load(&dir.join(CONTRACTS_FILE))?;
    let wanted: Vec<Symbol> = match symbols {
        Some(s) => s.to_vec(),
        None => book.symbols().cloned().collect(),
    };
    let mut bars = BTreeMap::new();
    let mut market = Market::new();
    let mut skipped = BTreeMap::new();
    for sym in wanted {
        let spec = book.get(&sym)?;
        let b = parse_bar_csv(&bar_path(dir, &sym), spec)?;
        let mut sk = SkippedRows {
            bars: b.skipped,
            ..Default::default()
        };
        let mut m = SymbolMarket::default();
        let qp = quote_path(dir, &sym);
        if qp.exists() {
            let q = parse_quote_csv(&qp, spec)?;
            sk.quotes = q.skipped;
            m.quotes = q.rows;
        }
        let tp = trade_path(dir, &sym);
        if tp.exists() {
            let t = parse_trade_csv(&tp, spec)?;
            sk.trades = t.skipped;
            m.trades = t.rows;
        }
        if sk != SkippedRows::default() {
            warn!(
                "{sym}: skipped {} bar, {} quote, {} trade rows",
                sk.bars, sk.quotes, sk.trades
            );
        }
        info!(
            "{sym}: {} bars, {} quotes, {} trades",
            b.rows.len(),
            m.quotes.len(),
            m.trades.len()
        );
        bars.insert(sym.clone(), b.rows);
        market.insert(sym.clone(), m);
        skipped.insert(sym, sk);
    }
    Ok(MarketData {
        book,
        bars,
        market,
        skipped,
    })
}

impl MarketData {
    /// Wraps in-memory streams, e.g. from the synthetic market generator.
    pub fn from_streams(book: ContractBook, streams: Vec<(Symbol, SymbolStreams)>) -> Self {
        let mut bars = BTreeMap::new();
        let mut market = Market::new();
        let mut skipped = BTreeMap::new();
        for (sym, s) in streams {
            bars.insert(sym.clone(), s.bars);
            market.insert(
                sym.clone(),
                SymbolMarket {
                    quotes: s.quotes,
                    trades: s.trades,
                },
            );
            skipped.insert(sym, SkippedRows::default());
        }
        MarketData {
            book,
            bars,
            market,
            skipped,
        }
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        self.bars.keys().cloned().collect()
    }

    /// Widest range all `symbols` cover: latest first bar to earliest last bar.
    pub fn common_range(&self, symbols: &[Symbol]) -> Result<(Timestamp, Timestamp), RunError> {
        let mut start = None::<Timestamp>;
        let mut end = None::<Timestamp>;
        for sym in symbols {
            let b = self
                .bars
                .get(sym)
                .ok_or_else(|| RunError::Data(format!("symbol {sym} not loaded")))?;
            let (Some(first), Some(last)) = (b.first(), b.last()) else {
                return Err(RunError::Data(format!("{sym} has no bars")));
            };
            start = Some(start.map_or(first.ts, |s| s.max(first.ts)));
            end = Some(end.map_or(last.ts, |e| e.min(last.ts)));
        }
        match (start, end) {
            (Some(s), Some(e)) if e > s => Ok((s, e)),
            _ => Err(RunError::Data("symbols share no common time range".into())),
        }
    }

    /// XBT-denominated, forward-filled minute panel over [start, end].
    pub fn panel(
        &self,
        symbols: &[Symbol],
        start: Timestamp,
        end: Timestamp,
    ) -> Result<AlignedPanel, RunError> {
        let series = symbols
            .iter()
            .map(|s| {
                let bars = self
                    .bars
                    .get(s)
                    .ok_or_else(|| RunError::Data(format!("no bars loaded for {s}")))?;
                Ok(denominate_to_xbt(bars, self.book.get(s)?)?)
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        Ok(align_panel(&series, start, end)?)
    }

    /// Keeps only the symbols named, in their given order.
    pub fn restrict(mut self, symbols: &[Symbol]) -> Result<Self, RunError> {
        for s in symbols {
            if !self.bars.contains_key(s) {
                return Err(RunError::Data(format!("symbol {s} not loaded")));
            }
        }
        self.bars.retain(|s, _| symbols.contains(s));
        self.market.retain(|s, _| symbols.contains(s));
        self.skipped.retain(|s, _| symbols.contains(s));
        Ok(self)
    }
}

/// Writes a data directory that [`load_data_dir`] reads back.
pub fn write_data_dir(
    dir: &Path,
    book: &ContractBook,
    streams: &[(Symbol, SymbolStreams)],
) -> Result<(), RunError> {
    for sub in ["bars", "quotes", "trades"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| RunError::Io(dir.join(sub), e))?;
    }
    std::fs::write(dir.join(CONTRACTS_FILE), book.to_toml_string())
        .map_err(|e| RunError::Io(dir.join(CONTRACTS_FILE), e))?;
    for (sym, s) in streams {
        write_bar_csv(&bar_path(dir, sym), &s.bars)?;
        write_quote_csv(&quote_path(dir, sym), &s.quotes)?;
        write_trade_csv(&trade_path(dir, sym), &s.trades)?;
    }
    Ok(())
}
