//! Augmented Dickey-Fuller and KSS (nonlinear ESTAR) unit-root tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::critical::{NullTables, TestKind};
use super::ols::{ols_fit_columns, quick_fit};
use super::StatsError;

/// Levels at which results carry a reject flag.
pub const REPORT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Deterministic terms. For ADF they enter the regression; for KSS the
/// series is demeaned or detrended first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deterministic {
    #[default]
    None,
    Constant,
    Trend,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagRule {
    Fixed,
    #[default]
    Aic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Form {
    Linear,
    Cubic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRootOptions {
    /// Largest lag considered; `None` uses the Schwert rule.
    pub max_lag: Option<usize>,
    pub lag_rule: LagRule,
    pub deterministic: Deterministic,
}

impl Default for UnitRootOptions {
    fn default() -> Self {
        UnitRootOptions {
            max_lag: None,
            lag_rule: LagRule::Aic,
            deterministic: Deterministic::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub level: f64,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRootResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub lag_order: usize,
    pub p_value: f64,
    pub nobs: usize,
    pub reject_at: Vec<Rejection>,
}

impl UnitRootResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

pub type AdfResult = UnitRootResult;
pub type KssResult = UnitRootResult;

/// ⌊12 (T/100)^{1/4}⌋
pub fn max_lag_schwert(t: usize) -> usize {
    (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

fn detrend(s: &[f64], det: Deterministic) -> Vec<f64> {
    match det {
        Deterministic::None => s.to_vec(),
        Deterministic::Constant => {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| v - m).collect()
        }
        Deterministic::Trend => {
            let t: Vec<f64> = (0..s.len()).map(|i| i as f64).collect();
            match ols_fit_columns(s, &[&t], true) {
                Ok(fit) => fit.residuals,
                Err(_) => vec![0.0; s.len()],
            }
        }
    }
}

/// Regression of Δs_t for rows `first..n` on deterministic columns, the level
/// term and `lags` lagged differences, in that order.
fn design(
    s: &[f64],
    form: Form,
    det: Deterministic,
    lags: usize,
    first: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = s.len();
    let rows = first..n;
    let y: Vec<f64> = rows.clone().map(|t| s[t] - s[t - 1]).collect();
    let mut cols = Vec::new();
    if form == Form::Linear {
        match det {
            Deterministic::None => {}
            Deterministic::Constant => cols.push(vec![1.0; y.len()]),
            Deterministic::Trend => {
                cols.push(vec![1.0; y.len()]);
                cols.push(rows.clone().map(|t| t as f64).collect());
            }
        }
    }
    cols.push(
        rows.clone()
            .map(|t| match form {
                Form::Linear => s[t - 1],
                Form::Cubic => s[t - 1].powi(3),
            })
            .collect(),
    );
    for i in 1..=lags {
        cols.push(rows.clone().map(|t| s[t - i] - s[t - i - 1]).collect());
    }
    (y, cols)
}

fn n_det(form: Form, det: Deterministic) -> usize {
    match (form, det) {
        (Form::Cubic, _) | (_, Deterministic::None) => 0,
        (Form::Linear, Deterministic::Constant) => 1,
        (Form::Linear, Deterministic::Trend) => 2,
    }
}

/// AIC-minimising lag on the common sample that starts after `max_lag`.
fn select_lag(s: &[f64], form: Form, det: Deterministic, max_lag: usize) -> usize {
    let (y, cols) = design(s, form, det, max_lag, max_lag + 1);
    let k_max = cols.len();
    let n = y.len() as f64;
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| {
            c.iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let gram = DMatrix::from_fn(k_max, k_max, |a, b| {
        cols[a]
            .iter()
            .zip(&cols[b])
            .map(|(p, q)| p * q)
            .sum::<f64>()
            / (scale[a] * scale[b])
    });
    let xty = DVector::from_fn(k_max, |a, _| {
        cols[a].iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / scale[a]
    });
    let yty: f64 = y.iter().map(|v| v * v).sum();

    let base = n_det(form, det) + 1;
    let mut best = (f64::INFINITY, 0);
    for p in 0..=max_lag {
        let k = base + p;
        let sub = gram.view((0, 0), (k, k)).into_owned();
        let Some(chol) = sub.cholesky() else { continue };
        let rhs = xty.rows(0, k).into_owned();
        let b = chol.solve(&rhs);
        let ssr = (yty - b.dot(&rhs)).max(yty * 1e-300);
        let aic = n * (ssr / n).ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, p);
        }
    }
    best.1
}

/// t-ratio on the level term for a fixed lag order. `None` when the
/// regression is singular.
pub(crate) fn unit_root_statistic(
    s: &[f64],
    form: Form,
    det: Deterministic,
    lags: usize,
) -> Option<f64> {
    let series = if form == Form::Cubic {
        detrend(s, det)
    } else {
        s.to_vec()
    };
    let (y, cols) = design(&series, form, det, lags, lags + 1);
    let fit = quick_fit(&y, &cols)?;
    let j = n_det(form, det);
    let t = fit.coef[j] / fit.stderr[j];
    t.is_finite().then_some(t)
}

fn kind_for(form: Form, det: Deterministic) -> TestKind {
    match (form, det) {
        (Form::Linear, Deterministic::None) => TestKind::AdfNc,
        (Form::Linear, Deterministic::Constant) => TestKind::AdfC,
        (Form::Linear, Deterministic::Trend) => TestKind::AdfCt,
        (Form::Cubic, Deterministic::None) => TestKind::KssRaw,
        (Form::Cubic, Deterministic::Constant) => TestKind::KssDemeaned,
        (Form::Cubic, Deterministic::Trend) => TestKind::KssDetrended,
    }
}

fn run(
    s: &[f64],
    form: Form,
    opts: &UnitRootOptions,
    tables: &NullTables,
) -> Result<UnitRootResult, StatsError> {
    let n = s.len();
    let max_lag = opts.max_lag.unwrap_or_else(|| max_lag_schwert(n));
    if n <= max_lag + 10 {
        return Err(StatsError::TooShort {
            needed: max_lag + 11,
            got: n,
        });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Degenerate("non-finite value in series".into()));
    }
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if hi - lo <= 0.0 {
        return Err(StatsError::Degenerate("constant series".into()));
    }
    let det = opts.deterministic;
    let series = if form == Form::Cubic {
        detrend(s, det)
    } else {
        s.to_vec()
    };
    let lags = match opts.lag_rule {
        LagRule::Fixed => max_lag,
        LagRule::Aic => select_lag(&series, form, det, max_lag),
    };
    let (y, cols) = design(&series, form, det, lags, lags + 1);
    if y.iter().all(|v| *v == 0.0) {
        return Err(StatsError::Degenerate("no variation in differences".into()));
    }
    let fit = quick_fit(&y, &cols).ok_or(StatsError::Singular)?;
    let j = n_det(form, det);
    let statistic = fit.coef[j] / fit.stderr[j];
    if !statistic.is_finite() {
        return Err(StatsError::Degenerate("undefined t-ratio".into()));
    }
    let kind = kind_for(form, det);
    let p_value = tables.pvalue(kind, n, statistic);
    Ok(UnitRootResult {
        kind,
        statistic,
        lag_order: lags,
        p_value,
        nobs: y.len(),
        reject_at: REPORT_LEVELS
            .iter()
            .map(|l| Rejection {
                level: *l,
                reject: p_value < *l,
            })
            .collect(),
    })
}

/// ADF regression of Δs on s_{t-1} and lagged differences, no constant by
/// default.
pub fn adf_test(s: &[f64], max_lag: usize, lag_rule: LagRule) -> Result<AdfResult, StatsError> {
    adf_test_with(
        s,
        &UnitRootOptions {
            max_lag: Some(max_lag),
            lag_rule,
            ..Default::default()
        },
    )
}

pub fn adf_test_with(s: &[f64], opts: &UnitRootOptions) -> Result<AdfResult, StatsError> {
    run(s, Form::Linear, opts, NullTables::global())
}

/// KSS regression of Δs on s_{t-1}^3 with lagged differences chosen by AIC.
pub fn kss_test(s: &[f64], max_lag: usize) -> Result<KssResult, StatsError> {
    kss_test_with(
        s,
        &UnitRootOptions {
            max_lag: Some(max_lag),
            ..Default::default()
        },
    )
}

pub fn kss_test_with(s: &[f64], opts: &UnitRootOptions) -> Result<KssResult, StatsError> {
    run(s, Form::Cubic, opts, NullTables::global())
}

/// Kind of table a test with these options reads its p-value from.
pub fn table_kind(kss: bool, det: Deterministic) -> TestKind {
    kind_for(if kss { Form::Cubic } else { Form::Linear }, det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            s[t] = phi * s[t - 1] + e;
        }
        s
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(
            adf_test(&[3.0; 200], 4, LagRule::Aic),
            Err(StatsError::Degenerate(_))
        ));
        assert!(matches!(
            kss_test(&[3.0; 200], 4),
            Err(StatsError::Degenerate(_))
        ));
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            adf_test(&[1.0, 2.0, 3.0], 4, LagRule::Fixed),
            Err(StatsError::TooShort { .. })
        ));
    }

    #[test]
    fn schwert_rule() {
        assert_eq!(max_lag_schwert(100), 12);
        assert_eq!(max_lag_schwert(1000), 21);
    }

    #[test]
    fn aic_finds_ar2_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = vec![0.0; 3000];
        let mut d_prev = 0.0;
        for t in 1..3000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            let d = 0.6 * d_prev + e;
            s[t] = s[t - 1] + d;
            d_prev = d;
        }
        let lag = select_lag(&s, Form::Linear, Deterministic::None, 10);
        assert!(lag >= 1, "lag {lag}");
    }

    #[test]
    fn scale_invariant_statistics() {
        let s = ar1(0.95, 800, 1);
        let big: Vec<f64> = s.iter().map(|v| v * 1000.0).collect();
        for form in [Form::Linear, Form::Cubic] {
            for lags in [0, 3] {
                let a = unit_root_statistic(&s, form, Deterministic::None, lags).unwrap();
                let b = unit_root_statistic(&big, form, Deterministic::None, lags).unwrap();
                assert!((a - b).abs() < 1e-9, "{form:?} {lags}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stationary_series_rejects() {
        let s = ar1(0.5, 1000, 2);
        let r = adf_test(&s, 4, LagRule::Aic).unwrap();
        assert!(r.statistic < -10.0);
        assert_eq!(r.p_value, 0.0);
        assert!(r.reject_at.iter().all(|x| x.reject));
    }
}
