//! Minute bars, top-of-book quotes and trade prints, and their CSV readers.
//!
//! Every reader enforces the exact header, parses rows in file order, skips
//! (and counts) rows that are unparsable or violate a row invariant, and fails
//! hard on timestamps that go backwards.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractSpec, Symbol};
use crate::time::Timestamp;

pub const BAR_HEADER: [&str; 4] = ["timestamp", "symbol", "close", "volume"];
pub const QUOTE_HEADER: [&str; 6] = [
    "timestamp",
    "symbol",
    "bid_price",
    "bid_size",
    "ask_price",
    "ask_size",
];
pub const TRADE_HEADER: [&str; 4] = ["timestamp", "symbol", "price", "size"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header {found:?} does not match expected {expected:?}")]
    Header {
        path: PathBuf,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("{path}: line {line}: timestamp {ts} does not advance past {prev}")]
    NonMonotone {
        path: PathBuf,
        line: u64,
        ts: Timestamp,
        prev: Timestamp,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub ts: Timestamp,
    pub symbol: Symbol,
    pub close: f64,
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuoteTick {
    pub ts: Timestamp,
    pub symbol: Symbol,
    pub bid_price: f64,
    pub bid_size: f64,
    pub ask_price: f64,
    pub ask_size: f64,
}

impl QuoteTick {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid_price + self.ask_price)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeTick {
    pub ts: Timestamp,
    pub symbol: Symbol,
    pub price: f64,
    pub size: f64,
}

/// Rows accepted from a file plus the number skipped as malformed.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub skipped: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ordering {
    Strict,
    NonDecreasing,
}

fn read_rows<T>(
    path: &Path,
    header: &[&str],
    order: Ordering,
    mut parse: impl FnMut(&csv::StringRecord) -> Option<T>,
    ts_of: impl Fn(&T) -> Timestamp,
) -> Result<Parsed<T>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(DataError::Header {
            path: path.to_path_buf(),
            found: found.iter().map(String::from).collect(),
            expected: header.iter().map(|s| s.to_string()).collect(),
        });
    }

    let mut rows: Vec<T> = Vec::new();
    let mut skipped = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(_) => {
                skipped += 1;
                continue;
            }
        }
        let Some(row) = (if record.len() == header.len() {
            parse(&record)
        } else {
            None
        }) else {
            skipped += 1;
            continue;
        };
        if let Some(prev) = rows.last() {
            let (prev, ts) = (ts_of(prev), ts_of(&row));
            let bad = match order {
                Ordering::Strict => ts <= prev,
                Ordering::NonDecreasing => ts < prev,
            };
            if bad {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                return Err(DataError::NonMonotone {
                    path: path.to_path_buf(),
                    line,
                    ts,
                    prev,
                });
            }
        }
        rows.push(row);
    }
    Ok(Parsed { rows, skipped })
}

fn field_ts(rec: &csv::StringRecord, i: usize) -> Option<Timestamp> {
    Timestamp::parse(rec.get(i)?).ok()
}

fn field_f64(rec: &csv::StringRecord, i: usize) -> Option<f64> {
    let v: f64 = rec.get(i)?.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn field_symbol(rec: &csv::StringRecord, i: usize, spec: &ContractSpec) -> Option<Symbol> {
    let s = rec.get(i)?.trim();
    (s == spec.symbol.as_str()).then(|| spec.symbol.clone())
}

/// Reads `timestamp,symbol,close,volume`. Rows for other symbols, with a
/// non-positive or off-grid close, or negative volume are skipped.
pub fn parse_bar_csv(path: &Path, spec: &ContractSpec) -> Result<Parsed<PriceBar>, DataError> {
    read_rows(
        path,
        &BAR_HEADER,
        Ordering::Strict,
        |rec| {
            let bar = PriceBar {
                ts: field_ts(rec, 0)?,
                symbol: field_symbol(rec, 1, spec)?,
                close: field_f64(rec, 2)?,
                volume: field_f64(rec, 3)?,
            };
            (bar.close > 0.0 && bar.volume >= 0.0 && spec.on_tick_grid(bar.close)).then_some(bar)
        },
        |b| b.ts,
    )
}

/// Reads `timestamp,symbol,bid_price,bid_size,ask_price,ask_size`. Crossed or
/// off-grid quotes are skipped.
pub fn parse_quote_csv(path: &Path, spec: &ContractSpec) -> Result<Parsed<QuoteTick>, DataError> {
    read_rows(
        path,
        &QUOTE_HEADER,
        Ordering::Strict,
        |rec| {
            let q = QuoteTick {
                ts: field_ts(rec, 0)?,
                symbol: field_symbol(rec, 1, spec)?,
                bid_price: field_f64(rec, 2)?,
                bid_size: field_f64(rec, 3)?,
                ask_price: field_f64(rec, 4)?,
                ask_size: field_f64(rec, 5)?,
            };
            let valid = q.bid_price > 0.0
                && q.ask_price > 0.0
                && q.bid_price <= q.ask_price
                && q.bid_size >= 0.0
                && q.ask_size >= 0.0
                && spec.on_tick_grid(q.bid_price)
                && spec.on_tick_grid(q.ask_price);
            valid.then_some(q)
        },
        |q| q.ts,
    )
}

/// Reads `timestamp,symbol,price,size`. Several prints may share a minute, so
/// timestamps only need to be non-decreasing.
pub fn parse_trade_csv(path: &Path, spec: &ContractSpec) -> Result<Parsed<TradeTick>, DataError> {
    read_rows(
        path,
        &TRADE_HEADER,
        Ordering::NonDecreasing,
        |rec| {
            let t = TradeTick {
                ts: field_ts(rec, 0)?,
                symbol: field_symbol(rec, 1, spec)?,
                price: field_f64(rec, 2)?,
                size: field_f64(rec, 3)?,
            };
            (t.price > 0.0 && t.size > 0.0 && spec.on_tick_grid(t.price)).then_some(t)
        },
        |t| t.ts,
    )
}

fn write_csv<T>(
    path: &Path,
    header: &[&str],
    rows: &[T],
    fields: impl Fn(&T) -> Vec<String>,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(fields(row)).map_err(wrap)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bar_csv(path: &Path, bars: &[PriceBar]) -> Result<(), DataError> {
    write_csv(path, &BAR_HEADER, bars, |b| {
        vec![
            b.ts.to_string(),
            b.symbol.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ]
    })
}

pub fn write_quote_csv(path: &Path, quotes: &[QuoteTick]) -> Result<(), DataError> {
    write_csv(path, &QUOTE_HEADER, quotes, |q| {
        vec![
            q.ts.to_string(),
            q.symbol.to_string(),
            q.bid_price.to_string(),
            q.bid_size.to_string(),
            q.ask_price.to_string(),
            q.ask_size.to_string(),
        ]
    })
}

pub fn write_trade_csv(path: &Path, trades: &[TradeTick]) -> Result<(), DataError> {
    write_csv(path, &TRADE_HEADER, trades, |t| {
        vec![
            t.ts.to_string(),
            t.symbol.to_string(),
            t.price.to_string(),
            t.size.to_string(),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractKind;
    use std::io::Write;

    fn spec() -> ContractSpec {
        ContractSpec::new("LTCXBT", ContractKind::Linear, 1.0, 0.01)
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_valid_bars() {
        let f = file(
            "timestamp,symbol,close,volume\n\
             2019-01-01T00:00:00Z,LTCXBT,100.00,5\n\
             2019-01-01T00:01:00Z,LTCXBT,100.01,0\n\
             2019-01-01T00:02:00Z,LTCXBT,100.02,1.5\n",
        );
        let parsed = parse_bar_csv(f.path(), &spec()).unwrap();
        assert_eq!(parsed.rows.len(), 3);
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.rows[1].close, 100.01);
    }

    #[test]
    fn negative_close_is_skipped() {
        let f = file(
            "timestamp,symbol,close,volume\n\
             2019-01-01T00:00:00Z,LTCXBT,-5,1\n\
             2019-01-01T00:01:00Z,LTCXBT,1.00,1\n\
             2019-01-01T00:02:00Z,LTCXBT,abc,1\n",
        );
        let parsed = parse_bar_csv(f.path(), &spec()).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.skipped, 2);
    }

    #[test]
    fn duplicate_timestamp_is_fatal() {
        let f = file(
            "timestamp,symbol,close,volume\n\
             2019-01-01T10:00:00Z,LTCXBT,1.00,1\n\
             2019-01-01T10:00:00Z,LTCXBT,1.01,1\n",
        );
        assert!(matches!(
            parse_bar_csv(f.path(), &spec()),
            Err(DataError::NonMonotone { .. })
        ));
    }

    #[test]
    fn header_must_match() {
        let f = file("time,symbol,close,volume\n2019-01-01T10:00:00Z,LTCXBT,1.00,1\n");
        assert!(matches!(
            parse_bar_csv(f.path(), &spec()),
            Err(DataError::Header { .. })
        ));
        assert!(matches!(
            parse_bar_csv(Path::new("/nonexistent/bars.csv"), &spec()),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn quote_validation() {
        let f = file(
            "timestamp,symbol,bid_price,bid_size,ask_price,ask_size\n\
             2019-01-01T00:00:00Z,LTCXBT,100,3,101,4\n\
             2019-01-01T00:01:00Z,LTCXBT,101,3,100,4\n\
             2019-01-01T00:02:00Z,LTCXBT,100.003,3,101,4\n",
        );
        let parsed = parse_quote_csv(f.path(), &spec()).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.rows[0].bid_price, 100.0);
        assert_eq!(parsed.skipped, 2);
    }

    #[test]
    fn trades_may_share_a_minute() {
        let f = file(
            "timestamp,symbol,price,size\n\
             2019-01-01T00:00:00Z,LTCXBT,100,3\n\
             2019-01-01T00:00:00Z,LTCXBT,100.01,1\n\
             2019-01-01T00:01:00Z,LTCXBT,100.01,0\n",
        );
        let parsed = parse_trade_csv(f.path(), &spec()).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.skipped, 1);
    }

    #[test]
    fn writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let q = QuoteTick {
            ts: Timestamp::from_ymd(2019, 1, 1).unwrap(),
            symbol: "LTCXBT".into(),
            bid_price: 1.23,
            bid_size: 10.0,
            ask_price: 1.24,
            ask_size: 7.0,
        };
        write_quote_csv(&path, std::slice::from_ref(&q)).unwrap();
        let back = parse_quote_csv(&path, &spec()).unwrap();
        assert_eq!(back.rows, vec![q]);
    }
}
