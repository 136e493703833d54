//! Acceptance checks. Each test prints one PASS/FAIL line; run with
//! `cargo test -p cointarb-tests --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use cointarb::contract::{ContractBook, ContractKind, ContractSpec, Symbol};
use cointarb::data::{QuoteTick, TradeTick};
use cointarb::econometrics::{
    adf_test_with, johansen_test, kss_test_with, NullTables, TestKind, UnitRootOptions,
};
use cointarb::exec::{
    contract_pnl, FillEngine, FillPolicy, Ledger, Liquidity, Market, Order, OrderKind, Side,
    SymbolMarket,
};
use cointarb::metrics::{max_drawdown, monthly_returns, romad, EquityCurve};
use cointarb::ou::{calibrate_ou, half_life, lookback_window};
use cointarb::report::{emit_report, ReportFormats};
use cointarb::runner::{run_scenario, ScenarioConfig};
use cointarb::spread::{integerize_weights, Leg, SpreadDef, UnitRootTest};
use cointarb::synth::{ou_path, synth_cointegrated, SynthSpec};
use cointarb::time::Timestamp;
use cointarb_tests::{ar1, cointegrated_pair, estar, random_walk, verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn share(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

#[test]
fn unit_root_size_and_power() {
    let clock = Instant::now();
    let (n, t) = (200u64, 5000);
    let opts = UnitRootOptions::default();
    let adf = |s: &[f64]| adf_test_with(s, &opts).unwrap().rejects(0.01);
    let kss = |s: &[f64]| kss_test_with(s, &opts).unwrap().rejects(0.01);
    let (mut adf_rw, mut adf_ar, mut kss_rw, mut kss_estar) = (0, 0, 0, 0);
    for seed in 0..n {
        let rw = random_walk(t, seed);
        adf_rw += adf(&rw) as usize;
        kss_rw += kss(&rw) as usize;
        adf_ar += adf(&ar1(0.5, t, 10_000 + seed)) as usize;
        kss_estar += kss(&estar(-0.5, 1.0, t, 20_000 + seed)) as usize;
    }
    let n = n as usize;
    let elapsed = clock.elapsed();
    let pass = share(adf_rw, n) <= 0.02
        && share(adf_ar, n) >= 0.99
        && share(kss_rw, n) <= 0.02
        && share(kss_estar, n) >= 0.95
        && elapsed <= Duration::from_secs(300);
    let detail = format!(
        "ADF rejects RW {adf_rw}/{n}, AR(1) 0.5 {adf_ar}/{n}; KSS rejects RW {kss_rw}/{n}, ESTAR {kss_estar}/{n}; {:.1}s",
        elapsed.as_secs_f64()
    );
    assert!(verdict("unit-root size and power at 1%", pass, detail));
}

#[test]
fn adf_null_quantile_anchor() {
    let tables = NullTables::global();
    let q = tables.critical_value(TestKind::AdfNc, 1000, 0.01);
    let p = tables.pvalue(TestKind::AdfNc, 1000, -2.58);
    let pass = (q - -2.58).abs() <= 0.03;
    let detail = format!(
        "1% quantile {q:.4} (target -2.58 +/- 0.03); p-value of -2.58 is {:.2}%",
        100.0 * p
    );
    assert!(verdict(
        "no-constant ADF null quantile at T=1000",
        pass,
        detail
    ));
}

#[test]
fn johansen_recovers_planted_vector() {
    let planted = [1.0, -2.0, 1.0];
    let n = 50;
    let (mut rank_one, mut exact) = (0, 0);
    for seed in 0..n as u64 {
        let spec = SynthSpec::new(3, 0.01, 0.1, 0.1, 10_000, 500 + seed, planted.to_vec())
            .with_base_price(100.0);
        let panel = synth_cointegrated(&spec).unwrap();
        let jr = johansen_test(&panel, 2, 0.05).unwrap();
        rank_one += (jr.rank == 1) as usize;
        let raw = SpreadDef {
            legs: jr
                .symbols
                .iter()
                .zip(&jr.vectors[0].weights)
                .map(|(s, w)| Leg {
                    symbol: s.clone(),
                    weight: *w,
                })
                .collect(),
            intercept: jr.vectors[0].intercept,
            raw: true,
        };
        if let Ok((ints, dropped)) = integerize_weights(&raw) {
            // A cointegrating vector is only defined up to sign.
            let w = ints.weights();
            let flip = if w[0] < 0.0 { -1.0 } else { 1.0 };
            if dropped.is_empty() && w.iter().zip(&planted).all(|(a, b)| a * flip == *b) {
                exact += 1;
            }
        }
    }
    let pass = share(rank_one, n) >= 0.90 && share(exact, n) >= 0.80;
    let detail =
        format!("rank 1 in {rank_one}/{n}; integer vector (1, -2, 1) recovered in {exact}/{n}");
    assert!(verdict("Johansen recovery on rank-1 panels", pass, detail));
}

#[test]
fn ou_half_life_recovery() {
    let n = 50;
    let mut lines = Vec::new();
    let mut pass = true;
    for theta in [0.0005, 0.005, 0.05] {
        let truth = std::f64::consts::LN_2 / theta;
        let (mut within, mut chain) = (0, 0);
        for seed in 0..n as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let path = ou_path(theta, 0.0, 1.0, 50_000, &mut rng);
            let fit = calibrate_ou(&path, 1.0).unwrap();
            let hl = half_life(&fit).unwrap().minutes;
            within += ((hl - truth).abs() <= 0.10 * truth) as usize;
            let expected = (2.0 / fit.theta - 1.0).round() as usize;
            chain += (lookback_window(&fit).unwrap().n_minutes == expected) as usize;
        }
        pass &= share(within, n) >= 0.90 && chain == n;
        lines.push(format!(
            "theta {theta}: {within}/{n} within 10%, look-back chain {chain}/{n}"
        ));
    }
    assert!(verdict(
        "OU half-life recovery at T=50000",
        pass,
        lines.join("; ")
    ));
}

/// A flat market printing at one price on both sides every minute.
fn flat_market(sym: &Symbol, price: f64, tick: f64, minutes: i64) -> Market {
    let mut m = SymbolMarket::default();
    for i in 0..minutes {
        let ts = Timestamp::from_minutes(i);
        m.quotes.push(QuoteTick {
            ts,
            symbol: sym.clone(),
            bid_price: price,
            bid_size: 1e6,
            ask_price: price + tick,
            ask_size: 1e6,
        });
        for _ in 0..2 {
            m.trades.push(TradeTick {
                ts,
                symbol: sym.clone(),
                price,
                size: 1e6,
            });
        }
    }
    Market::from([(sym.clone(), m)])
}

#[test]
fn execution_accounting() {
    // A traded week after one day of formation.
    let data = cointegrated_pair(8 * 1440 + 1, 31);
    let cfg = ScenarioConfig {
        formation_days: 1,
        trading_days: 7,
        seed: 31,
        ..Default::default()
    };
    let r = run_scenario(&cfg, &data).unwrap();
    let minutes = r.equity.len();
    let worst_gap = r
        .equity
        .iter()
        .map(|p| {
            (p.equity - (cfg.initial_capital + p.realized + p.unrealized - p.fees - p.funding))
                .abs()
        })
        .fold(0.0, f64::max);
    let early = r.fills.iter().filter(|f| f.ts <= f.placed_at).count();

    // Maker round trip at an unchanged price through the fill engine.
    let sym = Symbol::new("AAA");
    let (price, tick) = (0.05, 1e-6);
    let mut book = ContractBook::new();
    book.insert(ContractSpec::new(
        sym.clone(),
        ContractKind::Linear,
        1.0,
        tick,
    ));
    let market = flat_market(&sym, price, tick, 10);
    let policy = FillPolicy {
        repeg: false,
        ..Default::default()
    };
    let mut engine = FillEngine::new(&book, &market, policy);
    let mut ledger = Ledger::new(1.0);
    let size = 200;
    for (m, side) in [(0, Side::Buy), (3, Side::Sell)] {
        let ts = Timestamp::from_minutes(m);
        engine.step(ts).unwrap();
        engine.submit(Order {
            id: 0,
            symbol: sym.clone(),
            side,
            kind: OrderKind::Limit,
            limit_price: Some(price),
            size,
            remaining: size,
            placed_at: ts,
            expires_at: ts + 30,
            force: false,
            converted: false,
        });
        for fill in engine.step(ts + 1).unwrap() {
            assert_eq!(fill.liquidity, Liquidity::Maker);
            ledger.apply_fill(fill, book.get(&sym).unwrap()).unwrap();
        }
    }
    let notional = book.get(&sym).unwrap().notional_xbt(size as f64, price);
    let round_trip = ledger.equity() - 1.0;
    let rt_gap = (round_trip - 0.0005 * notional).abs();

    let pass = r.totals.n_fills > 0
        && minutes >= 7 * 1440
        && worst_gap <= 1e-12
        && rt_gap <= 1e-15
        && early == 0;
    let detail = format!(
        "identity gap {worst_gap:.1e} over {minutes} minutes and {} fills; maker round trip {round_trip:.3e} vs {:.3e}; {early} fills in the placement minute",
        r.totals.n_fills,
        0.0005 * notional
    );
    assert!(verdict("execution accounting", pass, detail));
}

/// Settles one contract at a time through its quote currency.
fn payoff_by_contract(size: i64, entry: f64, exit: f64, spec: &ContractSpec) -> f64 {
    let sign = size.signum() as f64;
    let per_contract = match spec.kind {
        // One USD of exposure bought at `entry`, sold at `exit`, converted at `exit`.
        ContractKind::Inverse => (exit / entry - 1.0) / exit,
        ContractKind::Linear | ContractKind::Quanto => exit - entry,
    } * spec.multiplier;
    (0..size.abs()).map(|_| sign * per_contract).sum()
}

#[test]
fn payoff_oracle() {
    let specs = [
        ContractSpec::new("XBTUSD", ContractKind::Inverse, 1.0, 0.5),
        ContractSpec::new("ETHUSD", ContractKind::Quanto, 1e-6, 0.05),
        ContractSpec::new("ETHXBT", ContractKind::Linear, 1.0, 1e-5),
    ];
    let prices: Vec<f64> = (0..10).map(|i| 50.0 * 1.9f64.powi(i)).collect();
    let sizes = [-1000i64, -250, -37, -2, -1, 1, 3, 40, 333, 1000];
    let mut worst = 0.0f64;
    let mut points = 0;
    for spec in &specs {
        for &entry in &prices {
            for &exit in prices.iter().rev() {
                for &size in &sizes {
                    let (a, b) = (
                        contract_pnl(size, entry, exit, spec).unwrap(),
                        payoff_by_contract(size, entry, exit, spec),
                    );
                    worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
                    points += 1;
                }
            }
        }
    }
    let example = contract_pnl(100, 5000.0, 10000.0, &specs[0]).unwrap();
    let pass = worst <= 1e-12 && (example - 0.01).abs() <= 1e-15;
    let detail = format!("{points} grid points, worst relative gap {worst:.1e}; long 100 XBTUSD 5000 -> 10000 = {example} XBT");
    assert!(verdict(
        "contract P&L against per-contract settlement",
        pass,
        detail
    ));
}

#[test]
fn strategy_beats_buy_and_hold() {
    let clock = Instant::now();
    let n = 50;
    let (mut positive, mut beats, mut both) = (0, 0, 0);
    for seed in 0..n as u64 {
        let data = cointegrated_pair(14 * 1440 + 1, 7_000 + seed);
        let cfg = ScenarioConfig {
            formation_days: 7,
            trading_days: 7,
            seed,
            ..Default::default()
        };
        let r = run_scenario(&cfg, &data).unwrap();
        let pnl = r.metrics.total_pnl_xbt;
        let (up, better) = (pnl > 0.0, pnl > r.baseline_metrics.total_pnl_xbt);
        positive += up as usize;
        beats += better as usize;
        both += (up && better) as usize;
    }
    let elapsed = clock.elapsed();
    let pass = share(both, n) >= 0.80 && elapsed <= Duration::from_secs(600);
    let detail = format!(
        "positive in {positive}/{n}, beats buy-and-hold in {beats}/{n}, both in {both}/{n}; {:.1}s",
        elapsed.as_secs_f64()
    );
    assert!(verdict(
        "pair strategy on cointegrated synthetic pairs",
        pass,
        detail
    ));
}

fn brute_drawdown(v: &[f64]) -> (f64, f64) {
    let (mut abs, mut frac) = (0.0f64, 0.0f64);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            abs = abs.max(v[i] - v[j]);
            frac = frac.max((v[i] - v[j]) / v[i]);
        }
    }
    (abs, frac)
}

fn random_curve(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = 1.0;
    (0..n)
        .map(|_| {
            x *= 1.0 + rng.random_range(-0.05..0.05);
            x
        })
        .collect()
}

#[test]
fn metrics_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut dd_miss = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..300);
        let v = random_curve(&mut rng, n);
        let (a, f) = max_drawdown(&v);
        let (ba, bf) = brute_drawdown(&v);
        dd_miss += ((a - ba).abs() > 1e-12 || (f - bf).abs() > 1e-12) as usize;
    }

    let start = Timestamp::from_ymd(2018, 11, 17).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..2000);
        let step = rng.random_range(60..3000);
        let pts = random_curve(&mut rng, n)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (start + i as i64 * step, v))
            .collect();
        let curve = EquityCurve::new(1.0, pts).unwrap();
        let compound = monthly_returns(&curve)
            .iter()
            .map(|m| 1.0 + m.ret)
            .product::<f64>()
            - 1.0;
        worst = worst.max((compound - curve.total_return()).abs());
    }

    let ratio = romad(0.1017, 0.4041).unwrap();
    let pass = dd_miss == 0 && worst <= 1e-10 && (ratio * 100.0).round() == 25.0;
    let detail = format!(
        "drawdown mismatches {dd_miss}/1000; worst compounding gap {worst:.1e}; RoMaD 10.17% / 40.41% = {ratio:.4}"
    );
    assert!(verdict("metrics oracles", pass, detail));
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let data = cointegrated_pair(6 * 1440 + 1, 77);
    let tmp = std::env::temp_dir().join(format!("cointarb-acceptance-{}", std::process::id()));
    let formats = ReportFormats {
        plots: false,
        ..Default::default()
    };
    let mut compared = 0;
    let mut same = true;
    for test in [UnitRootTest::Adf, UnitRootTest::Kss] {
        let cfg = ScenarioConfig {
            test: Some(test),
            formation_days: 2,
            trading_days: 1,
            seed: 5,
            ..Default::default()
        };
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|d| {
                let dir = tmp.join(format!("{test:?}-{d}"));
                emit_report(&run_scenario(&cfg, &data).unwrap(), &dir, formats).unwrap();
                csv_bytes(&dir)
            })
            .collect();
        compared += runs[0].len();
        same &= !runs[0].is_empty() && runs[0] == runs[1];
    }
    std::fs::remove_dir_all(&tmp).ok();
    assert!(verdict(
        "determinism",
        same,
        format!("{compared} CSV files compared over ADF and KSS runs")
    ));
}
