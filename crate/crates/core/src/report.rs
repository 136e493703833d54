//! Run artifacts: CSV logs, a JSON summary and SVG charts.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::Symbol;
use crate::exec::SymbolPnl;
use crate::metrics::{MetricsReport, MonthlyReturn};
use crate::runner::{RunError, RunResult, RunTotals, ScenarioConfig};
use crate::spread::CandidateScore;
use crate::time::Timestamp;

pub const EQUITY_HEADER: [&str; 6] = [
    "timestamp",
    "equity_xbt",
    "realized",
    "unrealized",
    "fees",
    "funding",
];
pub const FILL_HEADER: [&str; 8] = [
    "timestamp",
    "order_id",
    "symbol",
    "side",
    "price",
    "size",
    "liquidity",
    "fee_xbt",
];
pub const SIGNAL_HEADER: [&str; 4] = ["timestamp", "kind", "z_tminus1", "z_tminus2"];
pub const METRICS_HEADER: [&str; 24] = [
    "scenario",
    "test",
    "pair",
    "windows",
    "traded_windows",
    "total_pnl_xbt",
    "total_return",
    "annualized_return",
    "return_std",
    "sharpe",
    "sharpe_per_window",
    "max_drawdown_xbt",
    "max_drawdown_fraction",
    "romad",
    "commission_pnl_xbt",
    "commission_share",
    "funding_pnl_xbt",
    "fills",
    "maker_fills",
    "taker_fills",
    "market_orders",
    "baseline_return",
    "baseline_max_drawdown_fraction",
    "baseline_romad",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportFormats {
    pub csv: bool,
    pub json: bool,
    pub plots: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        ReportFormats {
            csv: true,
            json: true,
            plots: true,
        }
    }
}

/// Everything in `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub universe: Vec<Symbol>,
    pub totals: RunTotals,
    pub metrics: MetricsReport,
    pub baseline_symbols: Vec<Symbol>,
    pub baseline_metrics: MetricsReport,
    pub per_symbol: Vec<(Symbol, SymbolPnl)>,
}

impl RunSummary {
    pub fn from_result(r: &RunResult) -> Self {
        RunSummary {
            config: r.config.clone(),
            universe: r.universe.clone(),
            totals: r.totals,
            metrics: r.metrics.clone(),
            baseline_symbols: r.baseline_symbols.clone(),
            baseline_metrics: r.baseline_metrics.clone(),
            per_symbol: r.per_symbol.iter().map(|(s, p)| (s.clone(), *p)).collect(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io(path.to_path_buf(), e)
}

fn write_csv<R, I>(path: &Path, header: &[&str], rows: R) -> Result<PathBuf, RunError>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = String>,
{
    let csv_err = |e: csv::Error| RunError::Report(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn test_label(r: &RunResult) -> String {
    match r.scenario {
        crate::spread::Scenario::PairAdf => "adf".into(),
        crate::spread::Scenario::PairKss => "kss".into(),
        crate::spread::Scenario::Basket => "johansen".into(),
        crate::spread::Scenario::FixedPair => String::new(),
    }
}

fn pair_label(r: &RunResult) -> String {
    r.config
        .pair
        .as_ref()
        .map(|[a, b]| format!("{a}-{b}"))
        .unwrap_or_default()
}

/// One flat row per run, for cross-run tables.
pub fn metrics_row(r: &RunResult) -> Vec<String> {
    let m = &r.metrics;
    let b = &r.baseline_metrics;
    vec![
        r.config.scenario.to_string(),
        test_label(r),
        pair_label(r),
        r.totals.n_windows.to_string(),
        r.totals.n_traded_windows.to_string(),
        num(m.total_pnl_xbt),
        num(m.total_return),
        num(m.annualized_return),
        opt(m.return_std),
        opt(m.sharpe),
        opt(m.sharpe_per_window),
        num(m.max_drawdown_xbt),
        num(m.max_drawdown_fraction),
        opt(m.romad),
        num(m.commission_pnl_xbt),
        opt(m.commission_share),
        num(m.funding_pnl_xbt),
        r.totals.n_fills.to_string(),
        r.totals.n_maker_fills.to_string(),
        r.totals.n_taker_fills.to_string(),
        r.totals.n_market_orders.to_string(),
        num(b.total_return),
        num(b.max_drawdown_fraction),
        opt(b.romad),
    ]
}

fn candidate_stat(c: &CandidateScore) -> (Option<f64>, Option<f64>, Option<usize>) {
    if let Some(r) = c.adf.as_ref().or(c.kss.as_ref()) {
        (Some(r.statistic), Some(r.p_value), Some(r.lag_order))
    } else {
        (None, c.johansen_pvalue, None)
    }
}

/// Writes the requested artifacts into `dir` and returns the paths written.
pub fn emit_report(
    r: &RunResult,
    dir: &Path,
    formats: ReportFormats,
) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    if formats.csv {
        out.push(write_csv(
            &dir.join("equity.csv"),
            &EQUITY_HEADER,
            r.equity.iter().map(|p| {
                [
                    p.ts.to_string(),
                    num(p.equity),
                    num(p.realized),
                    num(p.unrealized),
                    num(p.fees),
                    num(p.funding),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("fills.csv"),
            &FILL_HEADER,
            r.fills.iter().map(|f| {
                [
                    f.ts.to_string(),
                    f.order_id.to_string(),
                    f.symbol.to_string(),
                    f.side.as_str().to_string(),
                    num(f.price),
                    f.size.to_string(),
                    f.liquidity.as_str().to_string(),
                    num(f.fee_xbt),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("signals.csv"),
            &SIGNAL_HEADER,
            r.signals.iter().map(|s| {
                [
                    s.ts.to_string(),
                    s.kind.as_str().to_string(),
                    num(s.z_tminus1),
                    num(s.z_tminus2),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("selections.csv"),
            &[
                "window",
                "formation_start",
                "trading_start",
                "trading_end",
                "status",
                "symbols",
                "weights",
                "intercept",
                "statistic",
                "p_value",
                "lag_order",
                "theta",
                "half_life_hours",
                "lookback_minutes",
                "unit_value_xbt",
                "lot",
                "signals",
                "fills",
                "market_orders",
                "pnl_xbt",
                "note",
            ],
            r.windows.iter().map(|w| {
                let sel = w.selected.as_ref();
                let (stat, p, lag) = sel.map(candidate_stat).unwrap_or((None, None, None));
                vec![
                    w.index.to_string(),
                    w.window.formation_start.to_string(),
                    w.window.trading_start.to_string(),
                    w.window.trading_end.to_string(),
                    if w.traded() {
                        "traded"
                    } else if sel.is_some() {
                        "selected"
                    } else {
                        "no_trade"
                    }
                    .to_string(),
                    sel.map(|c| c.spread.label()).unwrap_or_default(),
                    sel.map(|c| c.spread.weight_label()).unwrap_or_default(),
                    sel.map(|c| num(c.spread.intercept)).unwrap_or_default(),
                    opt(stat),
                    opt(p),
                    lag.map(|l| l.to_string()).unwrap_or_default(),
                    opt(sel.and_then(|c| c.ou.map(|o| o.theta))),
                    opt(sel.and_then(|c| c.half_life.map(|h| h.hours()))),
                    w.lookback.map(|l| l.to_string()).unwrap_or_default(),
                    sel.map(|c| num(c.unit_value_xbt)).unwrap_or_default(),
                    w.lot.to_string(),
                    w.signals.len().to_string(),
                    w.run
                        .as_ref()
                        .map_or(0, |x| x.ledger.fills.len())
                        .to_string(),
                    w.run
                        .as_ref()
                        .map_or(0, |x| x.market_conversions)
                        .to_string(),
                    num(w.pnl()),
                    w.note.clone().unwrap_or_default(),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("candidates.csv"),
            &[
                "window",
                "symbols",
                "weights",
                "statistic",
                "p_value",
                "half_life_hours",
                "unit_value_xbt",
                "selected",
            ],
            r.windows.iter().flat_map(|w| {
                w.candidates.iter().map(move |c| {
                    let (stat, p, _) = candidate_stat(c);
                    let chosen = w.selected.as_ref().is_some_and(|s| s.spread == c.spread);
                    vec![
                        w.index.to_string(),
                        c.spread.label(),
                        c.spread.weight_label(),
                        opt(stat),
                        opt(p),
                        opt(c.half_life.map(|h| h.hours())),
                        num(c.unit_value_xbt),
                        chosen.to_string(),
                    ]
                })
            }),
        )?);
        out.push(write_csv(
            &dir.join("per_symbol_pnl.csv"),
            &["symbol", "realized", "fees", "funding", "net"],
            r.per_symbol.iter().map(|(s, p)| {
                [
                    s.to_string(),
                    num(p.realized),
                    num(p.fees),
                    num(p.funding),
                    num(p.net()),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("monthly_returns.csv"),
            &[
                "year",
                "month",
                "return",
                "start_equity",
                "end_equity",
                "partial",
            ],
            r.metrics.monthly_returns.iter().map(|m| {
                [
                    m.year.to_string(),
                    m.month.to_string(),
                    num(m.ret),
                    num(m.start_equity),
                    num(m.end_equity),
                    m.partial.to_string(),
                ]
            }),
        )?);
        out.push(write_csv(
            &dir.join("metrics.csv"),
            &METRICS_HEADER,
            [metrics_row(r)],
        )?);
        out.push(write_csv(
            &dir.join("baseline.csv"),
            &["timestamp", "equity_xbt"],
            r.baseline
                .points
                .iter()
                .map(|(t, e)| [t.to_string(), num(*e)]),
        )?);
    }
    if formats.json {
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&RunSummary::from_result(r))
            .map_err(|e| RunError::Report(e.to_string()))?;
        std::fs::write(&path, text).map_err(io_err(&path))?;
        out.push(path);
    }
    if formats.plots {
        let eq: Vec<(f64, f64)> = r
            .equity
            .iter()
            .map(|p| (p.ts.minutes() as f64 / 1440.0, p.equity))
            .collect();
        let base: Vec<(f64, f64)> = r
            .baseline
            .points
            .iter()
            .map(|(t, e)| (t.minutes() as f64 / 1440.0, *e))
            .collect();
        out.push(plot_equity(&dir.join("equity.svg"), &eq, &base)?);
        out.push(plot_monthly(
            &dir.join("monthly_returns.svg"),
            &r.metrics.monthly_returns,
        )?);
        let per: Vec<(String, f64)> = r
            .per_symbol
            .iter()
            .map(|(s, p)| (s.to_string(), p.net()))
            .collect();
        out.push(plot_per_symbol(&dir.join("per_symbol_pnl.svg"), &per)?);
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>, RunError> {
    let err = |e: csv::Error| RunError::Report(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.records().collect::<Result<_, _>>().map_err(err)
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    path: &Path,
) -> Result<T, RunError> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| RunError::Report(format!("{}: bad field {i} in {:?}", path.display(), rec)))
}

fn day_series(path: &Path) -> Result<Vec<(f64, f64)>, RunError> {
    read_csv(path)?
        .iter()
        .map(|rec| {
            let ts = Timestamp::parse(rec.get(0).unwrap_or_default())
                .map_err(|e| RunError::Report(format!("{}: {e}", path.display())))?;
            Ok((ts.minutes() as f64 / 1440.0, field(rec, 1, path)?))
        })
        .collect()
}

/// Redraws the charts of an existing run directory from its CSV files.
pub fn render_plots_from_dir(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let eq = day_series(&dir.join("equity.csv"))?;
    let base = day_series(&dir.join("baseline.csv"))?;
    let mpath = dir.join("monthly_returns.csv");
    let months = read_csv(&mpath)?
        .iter()
        .map(|r| {
            Ok(MonthlyReturn {
                year: field(r, 0, &mpath)?,
                month: field(r, 1, &mpath)?,
                ret: field(r, 2, &mpath)?,
                start_equity: field(r, 3, &mpath)?,
                end_equity: field(r, 4, &mpath)?,
                partial: field(r, 5, &mpath)?,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let ppath = dir.join("per_symbol_pnl.csv");
    let per = read_csv(&ppath)?
        .iter()
        .map(|r| {
            Ok((
                r.get(0).unwrap_or_default().to_string(),
                field(r, 4, &ppath)?,
            ))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(vec![
        plot_equity(&dir.join("equity.svg"), &eq, &base)?,
        plot_monthly(&dir.join("monthly_returns.svg"), &months)?,
        plot_per_symbol(&dir.join("per_symbol_pnl.svg"), &per)?,
    ])
}

/// Reads `report.json` back.
pub fn load_summary(dir: &Path) -> Result<RunSummary, RunError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Report(format!("{}: {e}", path.display())))
}

/// Cross-pair table for a set of runs, one metrics row each.
pub fn emit_pairs_table(runs: &[RunResult], path: &Path) -> Result<PathBuf, RunError> {
    write_csv(path, &METRICS_HEADER, runs.iter().map(metrics_row))
}

fn plot_err<E: std::fmt::Debug>(e: E) -> RunError {
    RunError::Report(format!("plot: {e:?}"))
}

/// At most `max` evenly spaced points, always keeping the last.
fn thin(points: &[(f64, f64)], max: usize) -> Vec<(f64, f64)> {
    if points.len() <= max {
        return points.to_vec();
    }
    let step = points.len().div_ceil(max);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(step).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("non-empty"));
    }
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

pub fn plot_equity(
    path: &Path,
    strategy: &[(f64, f64)],
    baseline: &[(f64, f64)],
) -> Result<PathBuf, RunError> {
    let s = thin(strategy, 2000);
    let b = thin(baseline, 2000);
    let (x0, x1) = bounds(s.iter().chain(&b).map(|p| p.0));
    let (y0, y1) = bounds(s.iter().chain(&b).map(|p| p.1));
    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .caption("Equity (XBT)", ("sans-serif", 20))
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("days since epoch")
        .y_desc("XBT")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(s, &BLUE))
        .map_err(plot_err)?
        .label("strategy")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(b, &RED))
        .map_err(plot_err)?
        .label("buy and hold")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(path.to_path_buf())
}

fn bar_chart(path: &Path, title: &str, bars: &[(String, f64)]) -> Result<PathBuf, RunError> {
    let n = bars.len().max(1);
    let (y0, y1) = bounds(bars.iter().map(|b| b.1).chain([0.0]));
    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let labels: Vec<String> = bars.iter().map(|b| b.0.clone()).collect();
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .caption(title, ("sans-serif", 20))
        .build_cartesian_2d(0.0..n as f64, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| labels.get(x.floor() as usize).cloned().unwrap_or_default())
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, (_, v))| {
            let color = if *v >= 0.0 { GREEN } else { RED };
            Rectangle::new(
                [(i as f64 + 0.1, 0.0), (i as f64 + 0.9, *v)],
                color.filled(),
            )
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(path.to_path_buf())
}

pub fn plot_monthly(path: &Path, months: &[MonthlyReturn]) -> Result<PathBuf, RunError> {
    let bars: Vec<(String, f64)> = months
        .iter()
        .map(|m| (format!("{}-{:02}", m.year, m.month), m.ret))
        .collect();
    bar_chart(path, "Monthly return", &bars)
}

pub fn plot_per_symbol(path: &Path, pnl: &[(String, f64)]) -> Result<PathBuf, RunError> {
    bar_chart(path, "Net P&L by symbol (XBT)", pnl)
}
