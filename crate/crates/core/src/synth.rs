//! Seeded synthetic fixtures: cointegrated price panels and the quote/trade
//! streams a backtest needs.
//!
//! A panel is built from independent random-walk trends for every symbol but
//! one (the anchor, the first symbol with a non-zero weight). The anchor is
//! solved for so that `sum_i w_i P_i` is exactly an Ornstein-Uhlenbeck path
//! sampled each minute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractBook, ContractError, ContractKind, ContractSpec, Symbol};
use crate::data::{PriceBar, QuoteTick, TradeTick};
use crate::panel::{AlignedPanel, PanelError};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(
        "{symbol} price went non-positive at row {row}; raise base_price or lower sigma_trend"
    )]
    NonPositive { symbol: Symbol, row: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_symbols: usize,
    /// Mean-reversion rate per minute; zero gives a random-walk combination.
    pub theta: f64,
    pub sigma_spread: f64,
    pub sigma_trend: f64,
    /// Number of minutes.
    pub length: usize,
    pub seed: u64,
    pub true_weights: Vec<f64>,
    pub start: Timestamp,
    /// Starting level of every trend symbol.
    pub base_price: f64,
    /// Long-run mean of the combination; defaults to `base_price * sum(w)`,
    /// which starts the anchor near `base_price` as well.
    pub spread_mean: Option<f64>,
    pub symbols: Option<Vec<Symbol>>,
}

impl SynthSpec {
    pub fn new(
        n_symbols: usize,
        theta: f64,
        sigma_spread: f64,
        sigma_trend: f64,
        length: usize,
        seed: u64,
        true_weights: Vec<f64>,
    ) -> Self {
        SynthSpec {
            n_symbols,
            theta,
            sigma_spread,
            sigma_trend,
            length,
            seed,
            true_weights,
            start: Timestamp::from_ymd(2019, 1, 1).expect("valid date"),
            base_price: 1.0,
            spread_mean: None,
            symbols: None,
        }
    }

    pub fn with_start(mut self, start: Timestamp) -> Self {
        self.start = start;
        self
    }

    pub fn with_base_price(mut self, base: f64) -> Self {
        self.base_price = base;
        self
    }

    pub fn with_spread_mean(mut self, mean: f64) -> Self {
        self.spread_mean = Some(mean);
        self
    }

    pub fn with_symbols(mut self, symbols: Vec<Symbol>) -> Self {
        self.symbols = Some(symbols);
        self
    }

    pub fn symbol_names(&self) -> Vec<Symbol> {
        self.symbols.clone().unwrap_or_else(|| {
            (0..self.n_symbols)
                .map(|i| Symbol::new(format!("SYN{i}")))
                .collect()
        })
    }

    pub fn mean(&self) -> f64 {
        self.spread_mean
            .unwrap_or_else(|| self.base_price * self.true_weights.iter().sum::<f64>())
    }
}

/// Exact minute-sampled OU path (`theta > 0`), a random walk (`theta == 0`), or
/// a constant when `sigma == 0`. Starts from the stationary law when mean
/// reverting.
pub fn ou_path(theta: f64, mu: f64, sigma: f64, length: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return out;
    }
    if sigma == 0.0 {
        out.resize(length, mu);
        return out;
    }
    if theta > 0.0 {
        let a = (-theta).exp();
        let step_sd = sigma * ((1.0 - a * a) / (2.0 * theta)).sqrt();
        let mut s = mu + sigma / (2.0 * theta).sqrt() * rng.sample::<f64, _>(StandardNormal);
        out.push(s);
        for _ in 1..length {
            s = mu + a * (s - mu) + step_sd * rng.sample::<f64, _>(StandardNormal);
            out.push(s);
        }
    } else {
        let mut s = mu;
        out.push(s);
        for _ in 1..length {
            s += sigma * rng.sample::<f64, _>(StandardNormal);
            out.push(s);
        }
    }
    out
}

pub fn synth_cointegrated(spec: &SynthSpec) -> Result<AlignedPanel, SynthError> {
    let n = spec.n_symbols;
    if n < 2 {
        return Err(SynthError::Dimensions(format!(
            "need at least 2 symbols, got {n}"
        )));
    }
    if spec.true_weights.len() != n {
        return Err(SynthError::Dimensions(format!(
            "{} weights for {n} symbols",
            spec.true_weights.len()
        )));
    }
    if spec.length < 2 {
        return Err(SynthError::Dimensions("length must be at least 2".into()));
    }
    let symbols = spec.symbol_names();
    if symbols.len() != n {
        return Err(SynthError::Dimensions(format!(
            "{} symbol names for {n} symbols",
            symbols.len()
        )));
    }
    if !(spec.theta >= 0.0) || !(spec.sigma_spread >= 0.0) || !(spec.sigma_trend >= 0.0) {
        return Err(SynthError::Parameter(
            "theta and sigmas must be non-negative".into(),
        ));
    }
    let anchor = spec
        .true_weights
        .iter()
        .position(|w| *w != 0.0)
        .ok_or_else(|| SynthError::Parameter("all weights are zero".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spread = ou_path(
        spec.theta,
        spec.mean(),
        spec.sigma_spread,
        spec.length,
        &mut rng,
    );

    let mut columns = vec![Vec::new(); n];
    for (j, col) in columns.iter_mut().enumerate() {
        if j == anchor {
            continue;
        }
        *col = ou_path(
            0.0,
            spec.base_price,
            spec.sigma_trend,
            spec.length,
            &mut rng,
        );
    }
    let w_a = spec.true_weights[anchor];
    let mut anchor_col = Vec::with_capacity(spec.length);
    for (t, s) in spread.iter().enumerate() {
        let rest: f64 = (0..n)
            .filter(|j| *j != anchor)
            .map(|j| spec.true_weights[j] * columns[j][t])
            .sum();
        anchor_col.push((s - rest) / w_a);
    }
    columns[anchor] = anchor_col;

    for (j, col) in columns.iter().enumerate() {
        if let Some(row) = col.iter().position(|p| !(*p > 0.0)) {
            return Err(SynthError::NonPositive {
                symbol: symbols[j].clone(),
                row,
            });
        }
    }
    Ok(AlignedPanel::from_columns(spec.start, symbols, columns)?)
}

/// Shape of the synthetic top-of-book and trade tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSynthSpec {
    /// Best bid and ask sit this many ticks either side of the rounded mid.
    pub half_spread_ticks: u32,
    pub quote_size: f64,
    /// Mean size of each minute's buyer- and seller-initiated print.
    pub trade_size: f64,
    pub seed: u64,
}

impl Default for MarketSynthSpec {
    fn default() -> Self {
        MarketSynthSpec {
            half_spread_ticks: 1,
            quote_size: 1_000.0,
            trade_size: 1_000.0,
            seed: 0,
        }
    }
}

/// Native-unit market data for one symbol.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolStreams {
    pub bars: Vec<PriceBar>,
    pub quotes: Vec<QuoteTick>,
    pub trades: Vec<TradeTick>,
}

/// Converts an XBT panel back to native prices on each contract's tick grid
/// and emits one bar and one quote per minute plus a print at the bid and
/// one at the ask.
pub fn synth_market(
    panel: &AlignedPanel,
    book: &ContractBook,
    spec: &MarketSynthSpec,
) -> Result<Vec<(Symbol, SymbolStreams)>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h = spec.half_spread_ticks.max(1) as f64;
    let mut out = Vec::with_capacity(panel.n_symbols());
    for (j, symbol) in panel.symbols().iter().enumerate() {
        let contract = book.get(symbol)?;
        let tick = contract.tick_size;
        let mut streams = SymbolStreams::default();
        for (row, value) in panel.column_at(j).iter().enumerate() {
            let ts = panel.timestamp(row);
            let native = contract.from_xbt(*value);
            let centre = (native / tick).round();
            if centre - h < 1.0 {
                return Err(SynthError::NonPositive {
                    symbol: symbol.clone(),
                    row,
                });
            }
            let close = centre * tick;
            let bid = (centre - h) * tick;
            let ask = (centre + h) * tick;
            let sell: f64 = rng.random_range(0.5..1.5);
            let buy: f64 = rng.random_range(0.5..1.5);
            streams.bars.push(PriceBar {
                ts,
                symbol: symbol.clone(),
                close,
                volume: (sell + buy) * spec.trade_size,
            });
            streams.quotes.push(QuoteTick {
                ts,
                symbol: symbol.clone(),
                bid_price: bid,
                bid_size: spec.quote_size,
                ask_price: ask,
                ask_size: spec.quote_size,
            });
            streams.trades.push(TradeTick {
                ts,
                symbol: symbol.clone(),
                price: bid,
                size: sell * spec.trade_size,
            });
            streams.trades.push(TradeTick {
                ts,
                symbol: symbol.clone(),
                price: ask,
                size: buy * spec.trade_size,
            });
        }
        out.push((symbol.clone(), streams));
    }
    Ok(out)
}

/// Linear XBT-quoted contracts for every symbol, with venue fees.
pub fn linear_book(symbols: &[Symbol], tick_size: f64) -> ContractBook {
    let mut book = ContractBook::new();
    for s in symbols {
        book.insert(ContractSpec::new(
            s.clone(),
            ContractKind::Linear,
            1.0,
            tick_size,
        ));
    }
    book
}

/// A cointegrated panel traded on linear contracts: the book plus the bar,
/// quote and trade streams for every symbol.
pub fn synth_linear_market(
    spec: &SynthSpec,
    tick_size: f64,
    market: &MarketSynthSpec,
) -> Result<(ContractBook, Vec<(Symbol, SymbolStreams)>), SynthError> {
    let panel = synth_cointegrated(spec)?;
    let book = linear_book(panel.symbols(), tick_size);
    let streams = synth_market(&panel, &book, market)?;
    Ok((book, streams))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn combination(panel: &AlignedPanel, w: &[f64]) -> Vec<f64> {
        (0..panel.len())
            .map(|r| panel.row(r).iter().zip(w).map(|(p, w)| p * w).sum())
            .collect()
    }

    #[test]
    fn zero_noise_combination_is_constant() {
        let w = vec![1.0, -2.0, 0.5];
        let spec = SynthSpec::new(3, 0.05, 0.0, 0.01, 2_000, 7, w.clone()).with_base_price(10.0);
        let panel = synth_cointegrated(&spec).unwrap();
        let c = combination(&panel, &w);
        let mean = spec.mean();
        assert!(
            c.iter().all(|v| (v - mean).abs() < 1e-12),
            "combination must stay at its mean"
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let spec =
            SynthSpec::new(2, 0.01, 0.01, 0.01, 500, 42, vec![1.0, -0.5]).with_base_price(5.0);
        let a = synth_cointegrated(&spec).unwrap();
        let b = synth_cointegrated(&spec).unwrap();
        assert_eq!(a, b);
        let other = synth_cointegrated(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn combination_is_the_ou_path() {
        let w = vec![1.0, -2.0];
        let spec = SynthSpec::new(2, 0.02, 0.01, 0.01, 1_000, 3, w.clone()).with_base_price(10.0);
        let panel = synth_cointegrated(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = ou_path(0.02, spec.mean(), 0.01, 1_000, &mut rng);
        let c = combination(&panel, &w);
        for (a, b) in c.iter().zip(&path) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            synth_cointegrated(&SynthSpec::new(1, 0.1, 1.0, 1.0, 100, 0, vec![1.0])),
            Err(SynthError::Dimensions(_))
        ));
        assert!(matches!(
            synth_cointegrated(&SynthSpec::new(2, 0.1, 1.0, 1.0, 100, 0, vec![1.0])),
            Err(SynthError::Dimensions(_))
        ));
        assert!(matches!(
            synth_cointegrated(&SynthSpec::new(2, 0.1, 1.0, 1.0, 100, 0, vec![0.0, 0.0])),
            Err(SynthError::Parameter(_))
        ));
    }

    #[test]
    fn market_streams_sit_on_grid() {
        use crate::contract::{ContractKind, ContractSpec};
        let spec =
            SynthSpec::new(2, 0.02, 0.001, 0.001, 50, 1, vec![1.0, -1.0]).with_base_price(1.0);
        let panel = synth_cointegrated(&spec).unwrap();
        let mut book = ContractBook::new();
        for s in panel.symbols() {
            book.insert(ContractSpec::new(
                s.clone(),
                ContractKind::Linear,
                1.0,
                1e-5,
            ));
        }
        let streams = synth_market(&panel, &book, &MarketSynthSpec::default()).unwrap();
        for (sym, s) in &streams {
            let c = book.get(sym).unwrap();
            assert_eq!(s.quotes.len(), 50);
            assert_eq!(s.trades.len(), 100);
            for q in &s.quotes {
                assert!(c.on_tick_grid(q.bid_price) && c.on_tick_grid(q.ask_price));
                assert!(q.bid_price < q.ask_price);
            }
        }
    }
}
