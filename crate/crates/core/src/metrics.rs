//! Performance statistics over XBT equity curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::Symbol;
use crate::panel::{AlignedPanel, PanelError};
use crate::time::{Timestamp, MINUTES_PER_DAY};

pub const WEEKS_PER_YEAR: f64 = 52.0;
const MINUTES_PER_YEAR: f64 = 365.0 * MINUTES_PER_DAY as f64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("equity curve is empty")]
    Empty,
    #[error("equity curve timestamps must increase strictly ({prev} then {ts})")]
    NotIncreasing { prev: Timestamp, ts: Timestamp },
    #[error("initial capital must be positive")]
    BadCapital,
    #[error("baseline needs at least one symbol")]
    NoSymbols,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub initial_capital: f64,
    pub points: Vec<(Timestamp, f64)>,
}

impl EquityCurve {
    pub fn new(initial_capital: f64, points: Vec<(Timestamp, f64)>) -> Result<Self, MetricsError> {
        if !(initial_capital > 0.0) {
            return Err(MetricsError::BadCapital);
        }
        if points.is_empty() {
            return Err(MetricsError::Empty);
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(MetricsError::NotIncreasing {
                    prev: w[0].0,
                    ts: w[1].0,
                });
            }
        }
        Ok(EquityCurve {
            initial_capital,
            points,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn final_equity(&self) -> f64 {
        self.points.last().expect("non-empty").1
    }

    pub fn total_return(&self) -> f64 {
        self.final_equity() / self.initial_capital - 1.0
    }

    pub fn span_minutes(&self) -> i64 {
        self.points.last().expect("non-empty").0 - self.points[0].0
    }
}

/// Largest fall from a running peak in XBT, and largest fall as a fraction
/// of its peak. The two can come from different episodes.
pub fn max_drawdown(values: &[f64]) -> (f64, f64) {
    let mut peak = f64::NEG_INFINITY;
    let (mut worst, mut frac) = (0.0f64, 0.0f64);
    for &v in values {
        peak = peak.max(v);
        let dd = peak - v;
        worst = worst.max(dd);
        if peak > 0.0 {
            frac = frac.max(dd / peak);
        }
    }
    (worst, frac)
}

/// Annualised excess return over sample standard deviation. `None` with
/// fewer than two returns or zero variance.
pub fn sharpe(returns: &[f64], periods_per_year: f64, risk_free: f64) -> Option<f64> {
    let (mean, sd) = mean_std(returns)?;
    if sd == 0.0 {
        return None;
    }
    Some((mean - risk_free / periods_per_year) / sd * periods_per_year.sqrt())
}

fn mean_std(x: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.iter().all(|v| *v == x[0]) {
        return Some((mean, 0.0));
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

pub fn romad(total_return: f64, drawdown_fraction: f64) -> Option<f64> {
    (drawdown_fraction > 0.0).then(|| total_return / drawdown_fraction)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthlyReturn {
    pub year: i32,
    pub month: u32,
    pub start_equity: f64,
    pub end_equity: f64,
    pub ret: f64,
    /// The curve does not cover the whole calendar month.
    pub partial: bool,
}

/// Calendar-month returns chained from the initial capital, so compounding
/// them gives the total return.
pub fn monthly_returns(curve: &EquityCurve) -> Vec<MonthlyReturn> {
    let mut out: Vec<MonthlyReturn> = Vec::new();
    let mut start_equity = curve.initial_capital;
    let first_ts = curve.points[0].0;
    let last_ts = curve.points.last().expect("non-empty").0;
    let mut i = 0;
    while i < curve.points.len() {
        let ym = curve.points[i].0.year_month();
        let mut j = i;
        while j + 1 < curve.points.len() && curve.points[j + 1].0.year_month() == ym {
            j += 1;
        }
        let end_equity = curve.points[j].1;
        let month_start = Timestamp::from_ymd(ym.0, ym.1, 1).expect("valid month");
        let next_month = if ym.1 == 12 {
            (ym.0 + 1, 1)
        } else {
            (ym.0, ym.1 + 1)
        };
        let month_end =
            Timestamp::from_ymd(next_month.0, next_month.1, 1).expect("valid month") - 1;
        let partial = (i == 0 && first_ts > month_start)
            || (j + 1 == curve.points.len() && last_ts < month_end);
        out.push(MonthlyReturn {
            year: ym.0,
            month: ym.1,
            start_equity,
            end_equity,
            ret: end_equity / start_equity - 1.0,
            partial,
        });
        start_equity = end_equity;
        i = j + 1;
    }
    out
}

/// Equal XBT allocation to each symbol, long from the first to the last row
/// of `panel`, with a taker fee on entry and exit.
pub fn buy_and_hold_baseline(
    panel: &AlignedPanel,
    symbols: &[Symbol],
    capital: f64,
    taker_fee: f64,
) -> Result<EquityCurve, MetricsError> {
    if symbols.is_empty() {
        return Err(MetricsError::NoSymbols);
    }
    if panel.is_empty() {
        return Err(MetricsError::Empty);
    }
    let alloc = capital / symbols.len() as f64;
    let cols: Vec<&[f64]> = symbols
        .iter()
        .map(|s| panel.column(s))
        .collect::<Result<_, _>>()?;
    let units: Vec<f64> = cols.iter().map(|c| alloc / c[0]).collect();
    let entry_fee = capital * taker_fee;
    let last = panel.len() - 1;
    let points = (0..panel.len())
        .map(|r| {
            let value: f64 = units.iter().zip(&cols).map(|(u, c)| u * c[r]).sum();
            let mut equity = value - entry_fee;
            if r == last {
                equity -= value * taker_fee;
            }
            (panel.timestamp(r), equity)
        })
        .collect();
    EquityCurve::new(capital, points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub initial_capital: f64,
    pub final_equity: f64,
    pub total_pnl_xbt: f64,
    pub total_return: f64,
    /// Total return scaled linearly to a 365-day year.
    pub annualized_return: f64,
    /// Standard deviation of per-window returns, annualised.
    pub return_std: Option<f64>,
    pub sharpe: Option<f64>,
    /// Mean over standard deviation of per-window returns, not annualised.
    pub sharpe_per_window: Option<f64>,
    pub max_drawdown_xbt: f64,
    pub max_drawdown_fraction: f64,
    pub romad: Option<f64>,
    pub commission_pnl_xbt: f64,
    /// Fee P&L over total P&L.
    pub commission_share: Option<f64>,
    pub funding_pnl_xbt: f64,
    pub monthly_returns: Vec<MonthlyReturn>,
}

impl MetricsReport {
    /// `window_returns` are per trading window (weekly by default) and
    /// annualised with `periods_per_year`. Fees and funding are positive
    /// when paid.
    pub fn compute(
        curve: &EquityCurve,
        window_returns: &[f64],
        periods_per_year: f64,
        fees_xbt: f64,
        funding_xbt: f64,
    ) -> Self {
        let total_return = curve.total_return();
        let total_pnl = curve.final_equity() - curve.initial_capital;
        let span = curve.span_minutes();
        let annualized = if span > 0 {
            total_return * MINUTES_PER_YEAR / span as f64
        } else {
            0.0
        };
        let (dd_xbt, dd_frac) = max_drawdown(&curve.values());
        let sd = mean_std(window_returns).map(|(_, s)| s * periods_per_year.sqrt());
        MetricsReport {
            initial_capital: curve.initial_capital,
            final_equity: curve.final_equity(),
            total_pnl_xbt: total_pnl,
            total_return,
            annualized_return: annualized,
            return_std: sd,
            sharpe: sharpe(window_returns, periods_per_year, 0.0),
            sharpe_per_window: sharpe(window_returns, 1.0, 0.0),
            max_drawdown_xbt: dd_xbt,
            max_drawdown_fraction: dd_frac,
            romad: romad(total_return, dd_frac),
            commission_pnl_xbt: -fees_xbt,
            commission_share: (total_pnl != 0.0).then(|| -fees_xbt / total_pnl),
            funding_pnl_xbt: -funding_xbt,
            monthly_returns: monthly_returns(curve),
        }
    }
}
