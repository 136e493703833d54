//! Pair and basket spreads, weight integerisation and window selection.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::Symbol;
use crate::econometrics::{
    adf_test_with, johansen_test, kss_test_with, ols_fit_columns, JohansenResult, StatsError,
    UnitRootOptions, UnitRootResult,
};
use crate::ou::{
    calibrate_ou, half_life, lookback_window, HalfLife, LookbackWindow, OuError, OuParams,
};
use crate::panel::{AlignedPanel, PanelError};

pub const MIN_PAIR_OBSERVATIONS: usize = 100;
/// Entries smaller than this fraction of the largest are treated as zero.
const ZERO_WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpreadError {
    #[error("need at least {MIN_PAIR_OBSERVATIONS} aligned observations, got {0}")]
    TooShort(usize),
    #[error("price series lengths differ")]
    LengthMismatch,
    #[error("hedge ratio is zero")]
    ZeroWeight,
    #[error("weights {0:?} do not contain both a long and a short leg")]
    Untradable(Vec<i64>),
    #[error("no candidate passes the selection filters")]
    NoTradeThisWindow,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Ou(#[from] OuError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub symbol: Symbol,
    pub weight: f64,
}

/// `Σ weight_i · P_i + intercept`. Tradable spreads carry integer weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadDef {
    pub legs: Vec<Leg>,
    pub intercept: f64,
    pub raw: bool,
}

impl SpreadDef {
    pub fn symbols(&self) -> Vec<Symbol> {
        self.legs.iter().map(|l| l.symbol.clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.legs.iter().map(|l| l.weight).collect()
    }

    /// `A;B` style symbol list used in logs.
    pub fn label(&self) -> String {
        self.legs
            .iter()
            .map(|l| l.symbol.as_str())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn weight_label(&self) -> String {
        self.legs
            .iter()
            .map(|l| format!("{}", l.weight))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Σ|w_i| P_i at `row` of the panel.
    pub fn unit_value(&self, panel: &AlignedPanel, row: usize) -> Result<f64, SpreadError> {
        let mut v = 0.0;
        for leg in &self.legs {
            v += leg.weight.abs() * panel.column(&leg.symbol)?[row];
        }
        Ok(v)
    }
}

/// OLS of `p1` on `p2` with intercept. The spread is `P1 - βP2 - α`, i.e.
/// legs (1, -β) and intercept -α; the residuals are returned with it.
pub fn pair_spread(
    s1: &Symbol,
    p1: &[f64],
    s2: &Symbol,
    p2: &[f64],
) -> Result<(SpreadDef, Vec<f64>), SpreadError> {
    if p1.len() != p2.len() {
        return Err(SpreadError::LengthMismatch);
    }
    if p1.len() < MIN_PAIR_OBSERVATIONS {
        return Err(SpreadError::TooShort(p1.len()));
    }
    let fit = ols_fit_columns(p1, &[p2], true)?;
    let def = SpreadDef {
        legs: vec![
            Leg {
                symbol: s1.clone(),
                weight: 1.0,
            },
            Leg {
                symbol: s2.clone(),
                weight: -fit.beta[0],
            },
        ],
        intercept: -fit.alpha,
        raw: true,
    };
    Ok((def, fit.residuals))
}

/// Divides by the smallest nonzero |weight| and rounds half away from zero.
/// For a pair (1, -β) this scales by 1/|β| when |β| < 1 and rounds β
/// directly otherwise. Legs rounding to zero are dropped and reported.
pub fn integerize_weights(raw: &SpreadDef) -> Result<(SpreadDef, Vec<Symbol>), SpreadError> {
    let max = raw.legs.iter().map(|l| l.weight.abs()).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(SpreadError::ZeroWeight);
    }
    let live: Vec<&Leg> = raw
        .legs
        .iter()
        .filter(|l| l.weight.abs() > ZERO_WEIGHT_TOL * max)
        .collect();
    if live.len() < raw.legs.len() && raw.legs.len() == 2 {
        return Err(SpreadError::ZeroWeight);
    }
    let min = live
        .iter()
        .map(|l| l.weight.abs())
        .fold(f64::INFINITY, f64::min);
    let scale = 1.0 / min;
    let mut legs = Vec::new();
    let mut dropped = Vec::new();
    for leg in &raw.legs {
        let w = (leg.weight * scale).round();
        if w == 0.0 || leg.weight.abs() <= ZERO_WEIGHT_TOL * max {
            log::warn!("dropping leg {} whose weight rounds to zero", leg.symbol);
            dropped.push(leg.symbol.clone());
        } else {
            legs.push(Leg {
                symbol: leg.symbol.clone(),
                weight: w,
            });
        }
    }
    let ints: Vec<i64> = legs.iter().map(|l| l.weight as i64).collect();
    if !(ints.iter().any(|w| *w > 0) && ints.iter().any(|w| *w < 0)) {
        return Err(SpreadError::Untradable(ints));
    }
    Ok((
        SpreadDef {
            legs,
            intercept: raw.intercept * scale,
            raw: false,
        },
        dropped,
    ))
}

/// Pointwise `Σ w_i P_i + c` over the panel grid.
pub fn evaluate_spread(spread: &SpreadDef, panel: &AlignedPanel) -> Result<Vec<f64>, SpreadError> {
    let mut out = vec![spread.intercept; panel.len()];
    for leg in &spread.legs {
        let col = panel.column(&leg.symbol)?;
        for (o, p) in out.iter_mut().zip(col) {
            *o += leg.weight * p;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRootTest {
    Adf,
    Kss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub spread: SpreadDef,
    pub raw: SpreadDef,
    pub adf: Option<UnitRootResult>,
    pub kss: Option<UnitRootResult>,
    pub johansen_pvalue: Option<f64>,
    pub ou: Option<OuParams>,
    pub half_life: Option<HalfLife>,
    /// Σ|w|·P at the last formation minute, in XBT.
    pub unit_value_xbt: f64,
    pub lookback: LookbackWindow,
}

impl CandidateScore {
    /// Scores a tradable spread over the formation panel.
    fn score(
        raw: SpreadDef,
        spread: SpreadDef,
        formation: &AlignedPanel,
    ) -> Result<Self, SpreadError> {
        let series = evaluate_spread(&spread, formation)?;
        let ou = calibrate_ou(&series, 1.0)?;
        let hl = half_life(&ou)?;
        let lookback = lookback_window(&ou)?;
        let unit_value_xbt = spread.unit_value(formation, formation.len() - 1)?;
        Ok(CandidateScore {
            spread,
            raw,
            adf: None,
            kss: None,
            johansen_pvalue: None,
            ou: Some(ou),
            half_life: Some(hl),
            unit_value_xbt,
            lookback,
        })
    }

    pub fn test_pvalue(&self, scenario: Scenario) -> Option<f64> {
        match scenario {
            Scenario::PairAdf => self.adf.as_ref().map(|r| r.p_value),
            Scenario::PairKss => self.kss.as_ref().map(|r| r.p_value),
            Scenario::Basket => self.johansen_pvalue,
            Scenario::FixedPair => None,
        }
    }
}

/// Every ordered pair (i < j in panel order): OLS spread, unit-root test on
/// the residuals, integerisation and OU scoring of the tradable spread.
/// Pairs that cannot be scored are logged and skipped.
pub fn pair_candidates(
    formation: &AlignedPanel,
    test: UnitRootTest,
    opts: &UnitRootOptions,
) -> Vec<CandidateScore> {
    let n = formation.n_symbols();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let (a, b) = (&formation.symbols()[i], &formation.symbols()[j]);
            match score_pair(formation, a, b, test, opts) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::debug!("pair {a}-{b} skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

fn score_pair(
    formation: &AlignedPanel,
    a: &Symbol,
    b: &Symbol,
    test: UnitRootTest,
    opts: &UnitRootOptions,
) -> Result<CandidateScore, SpreadError> {
    let (raw, resid) = pair_spread(a, formation.column(a)?, b, formation.column(b)?)?;
    let result = match test {
        UnitRootTest::Adf => adf_test_with(&resid, opts)?,
        UnitRootTest::Kss => kss_test_with(&resid, opts)?,
    };
    let (tradable, _) = integerize_weights(&raw)?;
    let mut c = CandidateScore::score(raw, tradable, formation)?;
    match test {
        UnitRootTest::Adf => c.adf = Some(result),
        UnitRootTest::Kss => c.kss = Some(result),
    }
    Ok(c)
}

/// A fixed pair scored without filters, for the full-horizon scenario. The
/// OU fit is informative only, so its failure does not drop the pair.
pub fn fixed_pair_candidate(
    formation: &AlignedPanel,
    a: &Symbol,
    b: &Symbol,
    lookback: LookbackWindow,
) -> Result<CandidateScore, SpreadError> {
    let (raw, _) = pair_spread(a, formation.column(a)?, b, formation.column(b)?)?;
    let (spread, _) = integerize_weights(&raw)?;
    let series = evaluate_spread(&spread, formation)?;
    let ou = calibrate_ou(&series, 1.0).ok();
    let unit_value_xbt = spread.unit_value(formation, formation.len() - 1)?;
    Ok(CandidateScore {
        half_life: ou.as_ref().and_then(|p| half_life(p).ok()),
        ou,
        spread,
        raw,
        adf: None,
        kss: None,
        johansen_pvalue: None,
        unit_value_xbt,
        lookback,
    })
}

/// Johansen vectors below the selected rank, integerised and
/// scored. Vector signs are normalised so the first nonzero weight is
/// positive.
pub fn basket_candidates(
    formation: &AlignedPanel,
    lag_p: usize,
    alpha: f64,
) -> Result<(JohansenResult, Vec<CandidateScore>), SpreadError> {
    let jr = johansen_test(formation, lag_p, alpha)?;
    let mut out = Vec::new();
    for (k, v) in jr.vectors.iter().enumerate() {
        // Vector k is significant when the trace test rejects rank <= k.
        if k >= jr.rank {
            break;
        }
        let p = jr.vector_pvalues[k];
        let sign = v
            .weights
            .iter()
            .find(|w| **w != 0.0)
            .map_or(1.0, |w| w.signum());
        let raw = SpreadDef {
            legs: jr
                .symbols
                .iter()
                .zip(&v.weights)
                .map(|(s, w)| Leg {
                    symbol: s.clone(),
                    weight: sign * w,
                })
                .collect(),
            intercept: sign * v.intercept,
            raw: true,
        };
        let scored =
            integerize_weights(&raw).and_then(|(t, _)| CandidateScore::score(raw, t, formation));
        match scored {
            Ok(mut c) => {
                c.johansen_pvalue = Some(p);
                out.push(c);
            }
            Err(e) => log::debug!("basket vector {k} skipped: {e}"),
        }
    }
    Ok((jr, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PairAdf,
    PairKss,
    Basket,
    FixedPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub scenario: Scenario,
    pub test_alpha: f64,
    pub unit_value_soft_cap: f64,
    pub unit_value_hard_cap: f64,
}

impl SelectionPolicy {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let test_alpha = match scenario {
            Scenario::Basket => 0.10,
            _ => 0.01,
        };
        SelectionPolicy {
            scenario,
            test_alpha,
            unit_value_soft_cap: 1.0,
            unit_value_hard_cap: 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.test_alpha > 0.0 && self.test_alpha < 1.0) {
            return Err(format!("test alpha {} outside (0, 1)", self.test_alpha));
        }
        if !(self.unit_value_soft_cap > 0.0 && self.unit_value_soft_cap <= self.unit_value_hard_cap)
        {
            return Err("unit value caps must satisfy 0 < soft <= hard".into());
        }
        Ok(())
    }
}

fn tie_break(a: &CandidateScore, b: &CandidateScore) -> Ordering {
    let ha = a.half_life.map_or(f64::INFINITY, |h| h.minutes);
    let hb = b.half_life.map_or(f64::INFINITY, |h| h.minutes);
    ha.total_cmp(&hb)
        .then_with(|| a.spread.symbols().cmp(&b.spread.symbols()))
        .then_with(|| {
            a.spread
                .weights()
                .iter()
                .zip(b.spread.weights())
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Minimum half-life among candidates that pass the test and the hard value
/// cap, preferring the tier at or below the soft cap.
pub fn select_spread(
    candidates: &[CandidateScore],
    policy: &SelectionPolicy,
) -> Result<CandidateScore, SpreadError> {
    let passes = |c: &&CandidateScore| {
        let test_ok = match policy.scenario {
            Scenario::FixedPair => true,
            s => c.test_pvalue(s).is_some_and(|p| p < policy.test_alpha),
        };
        test_ok && c.unit_value_xbt > 0.0 && c.unit_value_xbt <= policy.unit_value_hard_cap
    };
    let survivors: Vec<&CandidateScore> = candidates.iter().filter(passes).collect();
    let tier1: Vec<&CandidateScore> = survivors
        .iter()
        .copied()
        .filter(|c| c.unit_value_xbt <= policy.unit_value_soft_cap)
        .collect();
    let pool = if tier1.is_empty() { survivors } else { tier1 };
    pool.into_iter()
        .min_by(|a, b| tie_break(a, b))
        .cloned()
        .ok_or(SpreadError::NoTradeThisWindow)
}
