//! XBT denomination and alignment of per-symbol series onto a minute grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractError, ContractSpec, Symbol};
use crate::data::PriceBar;
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("{0} has no observation at or before the panel start")]
    NoLeadingData(Symbol),
    #[error("panel end {end} precedes start {start}")]
    EmptyRange { start: Timestamp, end: Timestamp },
    #[error("symbol {0} is not in the panel")]
    MissingSymbol(Symbol),
    #[error("duplicate symbol {0}")]
    DuplicateSymbol(Symbol),
    #[error("panel rows {from}..{to} out of range for {len} rows")]
    OutOfRange { from: usize, to: usize, len: usize },
}

/// A time-ordered XBT-denominated close series for one symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub symbol: Symbol,
    pub ts: Vec<Timestamp>,
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }
}

/// Maps native closes to XBT: linear unchanged, quanto times the multiplier,
/// inverse as the reciprocal (the XBT value of one USD).
pub fn denominate_to_xbt(
    bars: &[PriceBar],
    spec: &ContractSpec,
) -> Result<PriceSeries, PanelError> {
    let mut ts = Vec::with_capacity(bars.len());
    let mut values = Vec::with_capacity(bars.len());
    for bar in bars {
        ts.push(bar.ts);
        values.push(spec.to_xbt(bar.close)?);
    }
    Ok(PriceSeries {
        symbol: spec.symbol.clone(),
        ts,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellSource {
    Observed,
    ForwardFilled,
}

/// Uniform minute grid of XBT prices, one column per symbol, with no gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    start: Timestamp,
    symbols: Vec<Symbol>,
    columns: Vec<Vec<f64>>,
    filled: Vec<Vec<bool>>,
}

impl AlignedPanel {
    /// Builds a panel from complete columns; every cell is marked observed.
    pub fn from_columns(
        start: Timestamp,
        symbols: Vec<Symbol>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, PanelError> {
        assert_eq!(symbols.len(), columns.len(), "one column per symbol");
        let len = columns.first().map_or(0, Vec::len);
        assert!(
            columns.iter().all(|c| c.len() == len),
            "columns must share a length"
        );
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(PanelError::DuplicateSymbol(s.clone()));
            }
        }
        let filled = vec![vec![false; len]; columns.len()];
        Ok(AlignedPanel {
            start,
            symbols,
            columns,
            filled,
        })
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    /// Last grid timestamp (inclusive).
    pub fn end(&self) -> Timestamp {
        self.start + self.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn timestamp(&self, row: usize) -> Timestamp {
        self.start + row as i64
    }

    pub fn grid(&self) -> impl Iterator<Item = Timestamp> + '_ {
        (0..self.len()).map(move |i| self.timestamp(i))
    }

    pub fn row_of(&self, ts: Timestamp) -> Option<usize> {
        let off = ts - self.start;
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    pub fn index_of(&self, symbol: &Symbol) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn column(&self, symbol: &Symbol) -> Result<&[f64], PanelError> {
        self.index_of(symbol)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| PanelError::MissingSymbol(symbol.clone()))
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn source(&self, symbol_index: usize, row: usize) -> CellSource {
        if self.filled[symbol_index][row] {
            CellSource::ForwardFilled
        } else {
            CellSource::Observed
        }
    }

    /// Fraction of forward-filled cells per symbol.
    pub fn fill_fraction(&self) -> Vec<(Symbol, f64)> {
        self.symbols
            .iter()
            .zip(&self.filled)
            .map(|(s, f)| {
                let n = f.iter().filter(|x| **x).count();
                (
                    s.clone(),
                    if f.is_empty() {
                        0.0
                    } else {
                        n as f64 / f.len() as f64
                    },
                )
            })
            .collect()
    }

    /// Rows `from..to` as a new panel.
    pub fn slice_rows(&self, from: usize, to: usize) -> Result<AlignedPanel, PanelError> {
        if from > to || to > self.len() {
            return Err(PanelError::OutOfRange {
                from,
                to,
                len: self.len(),
            });
        }
        Ok(AlignedPanel {
            start: self.timestamp(from),
            symbols: self.symbols.clone(),
            columns: self.columns.iter().map(|c| c[from..to].to_vec()).collect(),
            filled: self.filled.iter().map(|c| c[from..to].to_vec()).collect(),
        })
    }

    /// Rows with timestamps in `[from, to)`.
    pub fn slice_time(&self, from: Timestamp, to: Timestamp) -> Result<AlignedPanel, PanelError> {
        let a = from - self.start;
        let b = to - self.start;
        if a < 0 || b < a || b as usize > self.len() {
            return Err(PanelError::OutOfRange {
                from: a.max(0) as usize,
                to: b.max(0) as usize,
                len: self.len(),
            });
        }
        self.slice_rows(a as usize, b as usize)
    }

    /// Keeps only the listed symbols, in the given order.
    pub fn select(&self, symbols: &[Symbol]) -> Result<AlignedPanel, PanelError> {
        let mut columns = Vec::with_capacity(symbols.len());
        let mut filled = Vec::with_capacity(symbols.len());
        for s in symbols {
            let i = self
                .index_of(s)
                .ok_or_else(|| PanelError::MissingSymbol(s.clone()))?;
            columns.push(self.columns[i].clone());
            filled.push(self.filled[i].clone());
        }
        Ok(AlignedPanel {
            start: self.start,
            symbols: symbols.to_vec(),
            columns,
            filled,
        })
    }

    /// Row-major values of one grid row.
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }
}

/// Aligns each series onto the minute grid `[start, end]`, forward-filling
/// missing minutes from the last observation. Each symbol needs an
/// observation at or before `start`.
pub fn align_panel(
    series: &[PriceSeries],
    start: Timestamp,
    end: Timestamp,
) -> Result<AlignedPanel, PanelError> {
    if end < start {
        return Err(PanelError::EmptyRange { start, end });
    }
    let len = (end - start + 1) as usize;
    let mut symbols = Vec::with_capacity(series.len());
    let mut columns = Vec::with_capacity(series.len());
    let mut filled = Vec::with_capacity(series.len());

    for s in series {
        if symbols.contains(&s.symbol) {
            return Err(PanelError::DuplicateSymbol(s.symbol.clone()));
        }
        // Last observation at or before start seeds the fill.
        let first_idx = s.ts.partition_point(|t| *t <= start);
        if first_idx == 0 {
            return Err(PanelError::NoLeadingData(s.symbol.clone()));
        }
        let mut col = Vec::with_capacity(len);
        let mut fill = Vec::with_capacity(len);
        let mut cursor = first_idx - 1;
        let mut last = s.values[cursor];
        for row in 0..len {
            let ts = start + row as i64;
            while cursor + 1 < s.ts.len() && s.ts[cursor + 1] <= ts {
                cursor += 1;
                last = s.values[cursor];
            }
            col.push(last);
            fill.push(s.ts[cursor] != ts);
        }
        symbols.push(s.symbol.clone());
        columns.push(col);
        filled.push(fill);
    }
    Ok(AlignedPanel {
        start,
        symbols,
        columns,
        filled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractKind;

    fn t(m: i64) -> Timestamp {
        Timestamp::from_minutes(1_000_000 + m)
    }

    fn series(name: &str, pts: &[(i64, f64)]) -> PriceSeries {
        PriceSeries {
            symbol: name.into(),
            ts: pts.iter().map(|p| t(p.0)).collect(),
            values: pts.iter().map(|p| p.1).collect(),
        }
    }

    #[test]
    fn complete_data_is_observed() {
        let s = series("A", &[(0, 1.0), (1, 2.0), (2, 3.0)]);
        let p = align_panel(&[s], t(0), t(2)).unwrap();
        assert_eq!(p.column(&"A".into()).unwrap(), &[1.0, 2.0, 3.0]);
        assert!((0..3).all(|r| p.source(0, r) == CellSource::Observed));
        assert_eq!(p.fill_fraction()[0].1, 0.0);
    }

    #[test]
    fn missing_minute_is_forward_filled() {
        let s = series("A", &[(0, 1.0), (2, 3.0)]);
        let p = align_panel(&[s], t(0), t(3)).unwrap();
        assert_eq!(p.column(&"A".into()).unwrap(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(p.source(0, 1), CellSource::ForwardFilled);
        assert_eq!(p.source(0, 2), CellSource::Observed);
        assert_eq!(p.source(0, 3), CellSource::ForwardFilled);
    }

    #[test]
    fn late_starting_symbol_is_named() {
        let a = series("A", &[(0, 1.0)]);
        let b = series("B", &[(5, 1.0)]);
        match align_panel(&[a, b], t(0), t(10)) {
            Err(PanelError::NoLeadingData(s)) => assert_eq!(s.as_str(), "B"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn earlier_observation_seeds_first_cell() {
        let s = series("A", &[(-10, 7.0), (1, 8.0)]);
        let p = align_panel(&[s], t(0), t(1)).unwrap();
        assert_eq!(p.column_at(0), &[7.0, 8.0]);
        assert_eq!(p.source(0, 0), CellSource::ForwardFilled);
    }

    #[test]
    fn inverse_denomination_is_decreasing() {
        let spec = ContractSpec::new("XBTUSD", ContractKind::Inverse, 1.0, 0.5);
        let bars: Vec<PriceBar> = [4000.0, 5000.0, 10000.0]
            .iter()
            .enumerate()
            .map(|(i, c)| PriceBar {
                ts: t(i as i64),
                symbol: "XBTUSD".into(),
                close: *c,
                volume: 1.0,
            })
            .collect();
        let s = denominate_to_xbt(&bars, &spec).unwrap();
        assert!(s.values.windows(2).all(|w| w[1] < w[0]));
        assert!((s.values[2] - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn slicing() {
        let s = series("A", &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)]);
        let p = align_panel(&[s], t(0), t(3)).unwrap();
        let q = p.slice_time(t(1), t(3)).unwrap();
        assert_eq!(q.start(), t(1));
        assert_eq!(q.column_at(0), &[2.0, 3.0]);
        assert!(p.slice_time(t(2), t(9)).is_err());
    }
}
