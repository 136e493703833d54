//! Walk-forward scenario orchestration: per-window selection, signals and
//! simulated execution, stitched into one account history.

mod config;
mod load;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    FeeOverrides, JohansenConfig, ScenarioConfig, SelectionConfig, SignalConfig, UnitRootConfig,
};
pub use load::{
    bar_path, load_data_dir, quote_path, trade_path, write_data_dir, MarketData, SkippedRows,
    CONTRACTS_FILE,
};

use crate::contract::{ContractError, Symbol};
use crate::data::DataError;
use crate::econometrics::{table_kind, JohansenResult, NullTables, StatsError, TestKind};
use crate::exec::{
    lot_size, simulate_window, EquityPoint, ExecError, Fill, Liquidity, SymbolPnl, WindowPlan,
    WindowRun,
};
use crate::metrics::{buy_and_hold_baseline, EquityCurve, MetricsError, MetricsReport};
use crate::ou::LookbackWindow;
use crate::panel::{AlignedPanel, PanelError};
use crate::signals::{gen_signals, rolling_zscore, SignalEvent};
use crate::spread::{
    basket_candidates, evaluate_spread, fixed_pair_candidate, pair_candidates, select_spread,
    CandidateScore, Scenario, SelectionPolicy, SpreadError, UnitRootTest,
};
use crate::windows::{walk_forward_windows, WalkForwardWindow, WindowError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("report: {0}")]
    Report(String),
    #[error("window {window}: {source}")]
    Exec { window: usize, source: ExecError },
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    DataFile(#[from] DataError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Spread(#[from] SpreadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowResult {
    pub index: usize,
    pub window: WalkForwardWindow,
    pub candidates: Vec<CandidateScore>,
    pub johansen: Option<JohansenResult>,
    pub selected: Option<CandidateScore>,
    pub lookback: Option<usize>,
    pub lot: i64,
    pub signals: Vec<SignalEvent>,
    pub run: Option<WindowRun>,
    /// Why nothing was traded, when nothing was.
    pub note: Option<String>,
}

impl WindowResult {
    pub fn pnl(&self) -> f64 {
        self.run
            .as_ref()
            .map_or(0.0, |r| r.ledger.equity() - r.ledger.initial_capital)
    }

    pub fn traded(&self) -> bool {
        self.run
            .as_ref()
            .is_some_and(|r| !r.ledger.fills.is_empty())
    }

    fn idle(
        index: usize,
        window: WalkForwardWindow,
        candidates: Vec<CandidateScore>,
        johansen: Option<JohansenResult>,
        note: String,
    ) -> Self {
        info!(
            "window {index} ({}): no trade, {note}",
            window.trading_start
        );
        WindowResult {
            index,
            window,
            candidates,
            johansen,
            selected: None,
            lookback: None,
            lot: 0,
            signals: Vec::new(),
            run: None,
            note: Some(note),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub realized_xbt: f64,
    pub fees_xbt: f64,
    pub funding_xbt: f64,
    pub n_windows: usize,
    pub n_traded_windows: usize,
    pub n_signals: usize,
    pub n_skipped_signals: usize,
    pub n_orders: usize,
    pub n_market_orders: usize,
    pub n_fills: usize,
    pub n_maker_fills: usize,
    pub n_taker_fills: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub universe: Vec<Symbol>,
    pub windows: Vec<WindowResult>,
    /// Minute-level account history across all trading windows.
    pub equity: Vec<EquityPoint>,
    /// Every fill, with order ids renumbered to be unique across windows.
    pub fills: Vec<Fill>,
    pub signals: Vec<SignalEvent>,
    pub per_symbol: BTreeMap<Symbol, SymbolPnl>,
    pub totals: RunTotals,
    pub metrics: MetricsReport,
    pub baseline_symbols: Vec<Symbol>,
    pub baseline: EquityCurve,
    pub baseline_metrics: MetricsReport,
}

/// Loads the configured data directory and runs the scenario.
pub fn run_from_config(cfg: &ScenarioConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let symbols = universe_of(cfg);
    let data = load_data_dir(&cfg.data_dir, symbols.as_deref())?;
    run_scenario(cfg, &data)
}

fn universe_of(cfg: &ScenarioConfig) -> Option<Vec<Symbol>> {
    if cfg.scenario == 3 {
        cfg.pair.as_ref().map(|p| p.to_vec())
    } else {
        cfg.symbols.clone()
    }
}

fn periods_per_year(trading_days: u32) -> f64 {
    364.0 / trading_days as f64
}

pub fn run_scenario(cfg: &ScenarioConfig, data: &MarketData) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let scenario = cfg.scenario_kind()?;
    let policy = cfg.selection_policy()?;
    let universe = universe_of(cfg).unwrap_or_else(|| data.symbols());
    let (cfg_start, cfg_end) = cfg.range()?;
    let (data_start, data_end) = data.common_range(&universe)?;
    let start = cfg_start.unwrap_or(data_start);
    let end = cfg_end.unwrap_or(data_end);
    let windows = walk_forward_windows(start, end, cfg.formation_days, cfg.trading_days)?;
    let panel_end = windows.last().expect("at least one window").trading_end;
    let panel = data.panel(&universe, start, panel_end)?;
    info!(
        "scenario {} over {} symbols, {} windows from {start} to {panel_end}",
        cfg.scenario,
        universe.len(),
        windows.len()
    );

    // Fill the null tables up front so the parallel section only reads them.
    let formation_rows = cfg.formation_days as usize * 1440;
    match scenario {
        Scenario::PairAdf | Scenario::PairKss => {
            let kind = table_kind(scenario == Scenario::PairKss, cfg.unit_root.deterministic);
            NullTables::global().prepare(kind, formation_rows);
        }
        Scenario::Basket => {
            for dims in 1..=universe.len() {
                NullTables::global().prepare(TestKind::JohansenTrace { dims }, formation_rows);
            }
        }
        Scenario::FixedPair => {}
    }

    let results: Vec<WindowResult> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| run_window(i, *w, cfg, scenario, &policy, data, &panel))
        .collect::<Result<_, _>>()?;
    assemble(cfg, scenario, universe, results, data, &panel)
}

fn run_window(
    index: usize,
    window: WalkForwardWindow,
    cfg: &ScenarioConfig,
    scenario: Scenario,
    policy: &SelectionPolicy,
    data: &MarketData,
    panel: &AlignedPanel,
) -> Result<WindowResult, RunError> {
    let formation = panel.slice_time(window.formation_start, window.formation_end)?;
    let (candidates, johansen) = match scenario {
        Scenario::PairAdf => (
            pair_candidates(&formation, UnitRootTest::Adf, &cfg.unit_root.options()),
            None,
        ),
        Scenario::PairKss => (
            pair_candidates(&formation, UnitRootTest::Kss, &cfg.unit_root.options()),
            None,
        ),
        Scenario::Basket => {
            match basket_candidates(&formation, cfg.johansen.lag_p, cfg.johansen.alpha) {
                Ok((jr, c)) => (c, Some(jr)),
                Err(e) => {
                    return Ok(WindowResult::idle(
                        index,
                        window,
                        vec![],
                        None,
                        format!("johansen failed: {e}"),
                    ))
                }
            }
        }
        Scenario::FixedPair => {
            let [a, b] = cfg.pair.as_ref().expect("validated");
            let lb = LookbackWindow {
                n_minutes: cfg.scenario3_lookback,
            };
            match fixed_pair_candidate(&formation, a, b, lb) {
                Ok(c) => (vec![c], None),
                Err(e) => {
                    return Ok(WindowResult::idle(
                        index,
                        window,
                        vec![],
                        None,
                        format!("pair unusable: {e}"),
                    ))
                }
            }
        }
    };
    let selected = match select_spread(&candidates, policy) {
        Ok(c) => c,
        Err(e) => {
            return Ok(WindowResult::idle(
                index,
                window,
                candidates,
                johansen,
                e.to_string(),
            ))
        }
    };
    let lookback = match scenario {
        Scenario::FixedPair => cfg.scenario3_lookback,
        _ => selected.lookback.n_minutes,
    };

    // History before the trading start warms up the rolling z-score; the
    // signal state machine itself starts flat at the trading start.
    let t0 = panel
        .row_of(window.trading_start)
        .ok_or_else(|| RunError::Data("trading start off the panel".into()))?;
    let t1 = panel
        .row_of(window.trading_end)
        .ok_or_else(|| RunError::Data("trading end off the panel".into()))?;
    let h0 = t0.saturating_sub(lookback + 1);
    let segment = panel.slice_rows(h0, t1 + 1)?;
    let series = evaluate_spread(&selected.spread, &segment)?;
    let z = rolling_zscore(segment.start(), &series, lookback);
    let from = (t0 - h0).saturating_sub(2);
    let signals = gen_signals(
        &z[from..],
        &cfg.thresholds.thresholds(),
        cfg.thresholds.first_touch,
    );

    let lot = lot_size(cfg.lot_target_xbt, selected.unit_value_xbt);
    let plan = WindowPlan {
        spread: selected.spread.clone(),
        lot,
        events: signals.clone(),
        trading_start: window.trading_start,
        trading_end: window.trading_end,
    };
    let run = simulate_window(
        &plan,
        &data.book,
        &data.market,
        &cfg.fill,
        cfg.initial_capital,
    )
    .map_err(|source| RunError::Exec {
        window: index,
        source,
    })?;
    info!(
        "window {index} ({}): {} lot {lot}, {} signals, {} fills, pnl {:.6}",
        window.trading_start,
        selected.spread.weight_label(),
        signals.len(),
        run.ledger.fills.len(),
        run.ledger.equity() - cfg.initial_capital
    );
    for s in &run.skipped {
        warn!(
            "window {index}: {} at {} skipped ({})",
            s.kind.as_str(),
            s.ts,
            s.reason
        );
    }
    Ok(WindowResult {
        index,
        window,
        candidates,
        johansen,
        selected: Some(selected),
        lookback: Some(lookback),
        lot,
        signals,
        run: Some(run),
        note: None,
    })
}

fn assemble(
    cfg: &ScenarioConfig,
    scenario: Scenario,
    universe: Vec<Symbol>,
    windows: Vec<WindowResult>,
    data: &MarketData,
    panel: &AlignedPanel,
) -> Result<RunResult, RunError> {
    let initial = cfg.initial_capital;
    let mut equity: Vec<EquityPoint> = Vec::new();
    let mut fills = Vec::new();
    let mut signals = Vec::new();
    let mut per_symbol: BTreeMap<Symbol, SymbolPnl> = BTreeMap::new();
    let mut totals = RunTotals {
        n_windows: windows.len(),
        ..Default::default()
    };
    let mut window_returns = Vec::with_capacity(windows.len());
    let mut cum_pnl = 0.0;
    let mut order_offset = 0u64;

    for w in &windows {
        let push = |equity: &mut Vec<EquityPoint>, p: EquityPoint| {
            if equity.last().is_none_or(|l| l.ts < p.ts) {
                equity.push(p);
            }
        };
        let base = (
            cum_pnl,
            totals.realized_xbt,
            totals.fees_xbt,
            totals.funding_xbt,
        );
        match &w.run {
            Some(run) => {
                for p in &run.ledger.equity_curve {
                    push(
                        &mut equity,
                        EquityPoint {
                            ts: p.ts,
                            equity: p.equity + base.0,
                            realized: p.realized + base.1,
                            unrealized: p.unrealized,
                            fees: p.fees + base.2,
                            funding: p.funding + base.3,
                            gap: p.gap,
                        },
                    );
                }
                for f in &run.ledger.fills {
                    let mut f = f.clone();
                    f.order_id += order_offset;
                    match f.liquidity {
                        Liquidity::Maker => totals.n_maker_fills += 1,
                        Liquidity::Taker => totals.n_taker_fills += 1,
                    }
                    fills.push(f);
                }
                order_offset += run.orders_placed as u64;
                for (s, p) in &run.ledger.per_symbol {
                    let e = per_symbol.entry(s.clone()).or_default();
                    e.realized += p.realized;
                    e.fees += p.fees;
                    e.funding += p.funding;
                }
                totals.realized_xbt += run.ledger.realized_pnl_xbt;
                totals.fees_xbt += run.ledger.fees_xbt;
                totals.funding_xbt += run.ledger.funding_xbt;
                totals.n_orders += run.orders_placed;
                totals.n_market_orders += run.market_conversions;
                totals.n_skipped_signals += run.skipped.len();
                if w.traded() {
                    totals.n_traded_windows += 1;
                }
            }
            None => {
                let mut ts = w.window.trading_start;
                while ts <= w.window.trading_end {
                    let p = EquityPoint {
                        ts,
                        equity: initial + base.0,
                        realized: base.1,
                        unrealized: 0.0,
                        fees: base.2,
                        funding: base.3,
                        gap: false,
                    };
                    push(&mut equity, p);
                    ts = ts + 1;
                }
            }
        }
        signals.extend(w.signals.iter().copied());
        let pnl = w.pnl();
        window_returns.push(pnl / initial);
        cum_pnl += pnl;
    }
    totals.n_signals = signals.len();
    totals.n_fills = fills.len();

    let ppy = periods_per_year(cfg.trading_days);
    let curve = EquityCurve::new(initial, equity.iter().map(|p| (p.ts, p.equity)).collect())?;
    let metrics = MetricsReport::compute(
        &curve,
        &window_returns,
        ppy,
        totals.fees_xbt,
        totals.funding_xbt,
    );

    let traded: BTreeSet<Symbol> = windows
        .iter()
        .filter_map(|w| w.selected.as_ref())
        .flat_map(|c| c.spread.symbols())
        .collect();
    let baseline_symbols: Vec<Symbol> = if traded.is_empty() {
        universe.clone()
    } else {
        traded.into_iter().collect()
    };
    let first = windows
        .first()
        .expect("at least one window")
        .window
        .trading_start;
    let last = windows
        .last()
        .expect("at least one window")
        .window
        .trading_end;
    let span = panel.slice_time(first, last + 1)?;
    let taker = baseline_symbols
        .iter()
        .map(|s| data.book.get(s).map(|c| c.taker_fee_rate))
        .collect::<Result<Vec<_>, _>>()?;
    let taker = taker.iter().sum::<f64>() / taker.len() as f64;
    let baseline = buy_and_hold_baseline(&span, &baseline_symbols, initial, taker)?;
    let mut prev = initial;
    let baseline_returns: Vec<f64> = windows
        .iter()
        .map(|w| {
            let row = span
                .row_of(w.window.trading_end)
                .expect("window end inside the baseline span");
            let e = baseline.points[row].1;
            let r = (e - prev) / initial;
            prev = e;
            r
        })
        .collect();
    // Final equity is value - entry fee - value * taker.
    let entry_fee = initial * taker;
    let exit_value = (baseline.final_equity() + entry_fee) / (1.0 - taker);
    let baseline_fees = entry_fee + exit_value * taker;
    let baseline_metrics =
        MetricsReport::compute(&baseline, &baseline_returns, ppy, baseline_fees, 0.0);

    Ok(RunResult {
        config: cfg.clone(),
        scenario,
        universe,
        windows,
        equity,
        fills,
        signals,
        per_symbol,
        totals,
        metrics,
        baseline_symbols,
        baseline,
        baseline_metrics,
    })
}

/// Scenario 3 for every pair of the universe, each on its own panel.
pub fn run_all_pairs(cfg: &ScenarioConfig, data: &MarketData) -> Result<Vec<RunResult>, RunError> {
    let universe = cfg.symbols.clone().unwrap_or_else(|| data.symbols());
    let pairs: Vec<[Symbol; 2]> = universe
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            universe[i + 1..]
                .iter()
                .map(move |b| [a.clone(), b.clone()])
        })
        .collect();
    pairs
        .par_iter()
        .map(|p| {
            let c = ScenarioConfig {
                scenario: 3,
                pair: Some(p.clone()),
                ..cfg.clone()
            };
            run_scenario(&c, data)
        })
        .collect()
}
