use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use cointarb::contract::Symbol;
use cointarb::econometrics::{
    adf_test_with, johansen_test, kss_test_with, Deterministic, LagRule, UnitRootOptions,
    CACHE_DIR_ENV,
};
use cointarb::ou::{calibrate_ou, half_life, lookback_window};
use cointarb::panel::AlignedPanel;
use cointarb::report::{
    emit_pairs_table, emit_report, load_summary, render_plots_from_dir, ReportFormats,
};
use cointarb::runner::{
    load_data_dir, run_all_pairs, run_scenario, write_data_dir, MarketData, ScenarioConfig,
};
use cointarb::spread::{evaluate_spread, integerize_weights, pair_spread, UnitRootTest};
use cointarb::synth::{synth_linear_market, MarketSynthSpec, SynthSpec};
use cointarb::time::Timestamp;

#[derive(Parser)]
#[command(
    name = "cointarb",
    version,
    about = "Cointegration pairs and basket backtester for crypto futures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a data directory, then summarise it.
    Ingest(IngestArgs),
    /// Run a unit-root test on a pair spread or a Johansen test on a basket.
    Test(TestArgs),
    /// Fit an Ornstein-Uhlenbeck process to a pair spread.
    Calibrate(CalibrateArgs),
    /// Run a rolling-window backtest and write its report.
    Backtest(BacktestArgs),
    /// Redraw the charts of a finished run and print its headline numbers.
    Report(ReportArgs),
    /// Write a synthetic cointegrated market as a data directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Data directory holding contracts.toml and bars/quotes/trades CSVs.
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Range start (YYYY-MM-DD or RFC 3339); defaults to the common range.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<String>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestChoice {
    Adf,
    Kss,
    Johansen,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairTest {
    Adf,
    Kss,
}

impl From<PairTest> for UnitRootTest {
    fn from(t: PairTest) -> Self {
        match t {
            PairTest::Adf => UnitRootTest::Adf,
            PairTest::Kss => UnitRootTest::Kss,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "adf")]
    test: TestChoice,
    /// Pair for adf/kss, as A,B.
    #[arg(long, value_delimiter = ',')]
    pair: Option<Vec<String>>,
    /// Basket for johansen; defaults to every contract.
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<String>>,
    #[arg(long)]
    max_lag: Option<usize>,
    /// Fit a constant in the test regression.
    #[arg(long)]
    constant: bool,
    #[arg(long, default_value_t = 2)]
    lag_p: usize,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pair: Vec<String>,
}

#[derive(Args)]
struct BacktestArgs {
    /// TOML scenario file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    #[arg(long, value_enum)]
    test: Option<PairTest>,
    #[arg(long, value_delimiter = ',')]
    pair: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario 3 over every pair of the universe, one sub-directory each.
    #[arg(long)]
    all_pairs: bool,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous backtest.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    symbols: usize,
    #[arg(long, default_value_t = 14)]
    days: usize,
    /// Mean-reversion rate of the spread, per minute.
    #[arg(long, default_value_t = 0.005)]
    theta: f64,
    #[arg(long, default_value_t = 2e-5)]
    sigma_spread: f64,
    #[arg(long, default_value_t = 5e-6)]
    sigma_trend: f64,
    /// Cointegrating weights, one per symbol; defaults to 1,-1,0,...
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    base_price: f64,
    #[arg(long, default_value_t = 1e-6)]
    tick: f64,
    #[arg(long, default_value = "2019-01-01")]
    start: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn symbols(names: &[String]) -> Vec<Symbol> {
    names.iter().map(|s| Symbol::new(s.trim())).collect()
}

fn two(names: &[String]) -> Result<[Symbol; 2]> {
    match symbols(names).as_slice() {
        [a, b] if a != b => Ok([a.clone(), b.clone()]),
        _ => bail!("expected two distinct symbols as A,B, got {names:?}"),
    }
}

fn parse_ts(s: &Option<String>) -> Result<Option<Timestamp>> {
    s.as_deref()
        .map(|t| Timestamp::parse(t).with_context(|| format!("bad timestamp {t}")))
        .transpose()
}

fn load_panel(args: &DataArgs, syms: Option<&[Symbol]>) -> Result<(MarketData, AlignedPanel)> {
    let data = load_data_dir(&args.data, syms)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let syms = data.symbols();
    let (lo, hi) = data.common_range(&syms)?;
    let start = parse_ts(&args.start)?.unwrap_or(lo);
    let end = parse_ts(&args.end)?.unwrap_or(hi);
    let panel = data.panel(&syms, start, end)?;
    Ok((data, panel))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v)?) {
        // reader went away, e.g. piped into head
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let wanted = a.symbols.as_deref().map(symbols);
    let (data, panel) = load_panel(&a.data, wanted.as_deref())?;
    let per: Vec<_> = data
        .symbols()
        .iter()
        .map(|s| {
            let m = &data.market[s];
            let bars = &data.bars[s];
            json!({
                "symbol": s,
                "bars": bars.len(),
                "quotes": m.quotes.len(),
                "trades": m.trades.len(),
                "first": bars.first().map(|b| b.ts.to_string()),
                "last": bars.last().map(|b| b.ts.to_string()),
                "skipped": data.skipped[s],
            })
        })
        .collect();
    let fill: Vec<_> = panel
        .fill_fraction()
        .into_iter()
        .map(|(s, f)| json!({"symbol": s, "filled": f}))
        .collect();
    print_json(&json!({
        "symbols": per,
        "panel": {"start": panel.start().to_string(), "end": panel.end().to_string(), "minutes": panel.len(), "fill_fraction": fill},
    }))
}

fn run_test(a: TestArgs) -> Result<()> {
    let deterministic = if a.constant {
        Deterministic::Constant
    } else {
        Deterministic::None
    };
    let opts = UnitRootOptions {
        max_lag: a.max_lag,
        lag_rule: LagRule::Aic,
        deterministic,
    };
    match a.test {
        TestChoice::Adf | TestChoice::Kss => {
            let [s1, s2] = two(a
                .pair
                .as_deref()
                .context("--pair A,B is required for adf and kss")?)?;
            let (_, panel) = load_panel(&a.data, Some(&[s1.clone(), s2.clone()]))?;
            let (spread, resid) = pair_spread(&s1, panel.column(&s1)?, &s2, panel.column(&s2)?)?;
            let result = match a.test {
                TestChoice::Adf => adf_test_with(&resid, &opts)?,
                _ => kss_test_with(&resid, &opts)?,
            };
            print_json(&json!({"spread": spread, "test": result}))
        }
        TestChoice::Johansen => {
            let wanted = a.symbols.as_deref().map(symbols);
            let (_, panel) = load_panel(&a.data, wanted.as_deref())?;
            print_json(&serde_json::to_value(johansen_test(
                &panel, a.lag_p, a.alpha,
            )?)?)
        }
    }
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let [s1, s2] = two(&a.pair)?;
    let (_, panel) = load_panel(&a.data, Some(&[s1.clone(), s2.clone()]))?;
    let (raw, _) = pair_spread(&s1, panel.column(&s1)?, &s2, panel.column(&s2)?)?;
    let (spread, dropped) = integerize_weights(&raw)?;
    let values = evaluate_spread(&spread, &panel)?;
    let ou = calibrate_ou(&values, 1.0)?;
    let hl = half_life(&ou)?;
    let lookback = lookback_window(&ou)?;
    print_json(&json!({
        "hedge": raw,
        "spread": spread,
        "dropped_legs": dropped,
        "ou": ou,
        "half_life_minutes": hl.minutes,
        "half_life_hours": hl.hours(),
        "lookback_minutes": lookback.n_minutes,
        "ema_lambda": lookback.lambda(),
    }))
}

fn backtest(a: BacktestArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = a.scenario {
        cfg.scenario = s;
    }
    if let Some(t) = a.test {
        cfg.test = Some(t.into());
    }
    if let Some(p) = &a.pair {
        cfg.pair = Some(two(p)?);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.data {
        cfg.data_dir = d;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    let formats = ReportFormats {
        plots: !a.no_plots,
        ..Default::default()
    };
    if a.all_pairs {
        cfg.scenario = 3;
        let data = load_data_dir(&cfg.data_dir, cfg.symbols.as_deref())?;
        let universe = cfg.symbols.clone().unwrap_or_else(|| data.symbols());
        // validation wants a pair; any will do before the sweep replaces it
        cfg.pair = Some([universe[0].clone(), universe[1].clone()]);
        cfg.validate()?;
        let runs = run_all_pairs(&cfg, &data)?;
        for r in &runs {
            let [x, y] = r.config.pair.as_ref().expect("pair run");
            emit_report(r, &cfg.out_dir.join(format!("{x}-{y}")), formats)?;
        }
        let table = emit_pairs_table(&runs, &cfg.out_dir.join("pairs.csv"))?;
        println!("{} pairs, table at {}", runs.len(), table.display());
        return Ok(());
    }
    cfg.validate()?;
    let universe = if cfg.scenario == 3 {
        cfg.pair.as_ref().map(|p| p.to_vec())
    } else {
        cfg.symbols.clone()
    };
    let data = load_data_dir(&cfg.data_dir, universe.as_deref())?;
    info!(
        "running scenario {} on {} symbols",
        cfg.scenario,
        data.symbols().len()
    );
    let result = run_scenario(&cfg, &data)?;
    let written = emit_report(&result, &cfg.out_dir, formats)?;
    summarize(&cfg.out_dir)?;
    info!("wrote {} files", written.len());
    Ok(())
}

fn summarize(dir: &Path) -> Result<()> {
    let s = load_summary(dir)?;
    let m = &s.metrics;
    let b = &s.baseline_metrics;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "windows        {} ({} traded)",
        s.totals.n_windows, s.totals.n_traded_windows
    );
    println!(
        "fills          {} ({} maker, {} taker)",
        s.totals.n_fills, s.totals.n_maker_fills, s.totals.n_taker_fills
    );
    println!(
        "total pnl      {:.6} XBT ({:.4}%)",
        m.total_pnl_xbt,
        100.0 * m.total_return
    );
    println!("annualized     {:.4}%", 100.0 * m.annualized_return);
    println!("sharpe         {}", fmt(m.sharpe));
    println!(
        "max drawdown   {:.6} XBT ({:.4}%)",
        m.max_drawdown_xbt,
        100.0 * m.max_drawdown_fraction
    );
    println!("romad          {}", fmt(m.romad));
    println!(
        "fees           {:.6} XBT, funding {:.6} XBT",
        m.commission_pnl_xbt, m.funding_pnl_xbt
    );
    println!(
        "buy and hold   {:.4}% (max drawdown {:.4}%)",
        100.0 * b.total_return,
        100.0 * b.max_drawdown_fraction
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if !a.run.join("report.json").exists() {
        bail!("{} holds no report.json", a.run.display());
    }
    if !a.no_plots {
        for p in render_plots_from_dir(&a.run)? {
            info!("wrote {}", p.display());
        }
    }
    summarize(&a.run)
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.symbols < 2 {
        bail!("need at least two symbols");
    }
    let weights = a.weights.unwrap_or_else(|| {
        let mut w = vec![0.0; a.symbols];
        w[0] = 1.0;
        w[1] = -1.0;
        w
    });
    if weights.len() != a.symbols {
        bail!("{} weights for {} symbols", weights.len(), a.symbols);
    }
    let start = Timestamp::parse(&a.start).with_context(|| format!("bad start {}", a.start))?;
    let spec = SynthSpec::new(
        a.symbols,
        a.theta,
        a.sigma_spread,
        a.sigma_trend,
        a.days * 1440,
        a.seed,
        weights,
    )
    .with_start(start)
    .with_base_price(a.base_price);
    let market = MarketSynthSpec {
        seed: a.seed.wrapping_add(1),
        ..Default::default()
    };
    let (book, streams) = synth_linear_market(&spec, a.tick, &market)?;
    write_data_dir(&a.out, &book, &streams)?;
    println!(
        "wrote {} symbols x {} minutes to {}",
        streams.len(),
        spec.length,
        a.out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // simulated null tables are slow to build, so keep them between runs
    if std::env::var_os(CACHE_DIR_ENV).is_none() {
        if let Some(dir) = dirs::cache_dir() {
            std::env::set_var(CACHE_DIR_ENV, dir.join("cointarb"));
        }
    }
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Test(a) => run_test(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Backtest(a) => backtest(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}
