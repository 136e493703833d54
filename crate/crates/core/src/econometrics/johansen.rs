//! Johansen reduced-rank test with a constant restricted to the
//! cointegration space.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::critical::{NullTables, TestKind};
use super::StatsError;
use crate::contract::Symbol;
use crate::panel::AlignedPanel;

const COND_LIMIT: f64 = 1e12;

/// One eigenvector in original price units: `weights · P_t + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CointegratingVector {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JohansenResult {
    pub symbols: Vec<Symbol>,
    pub eigenvalues: Vec<f64>,
    /// Trace statistic for H0: rank ≤ r, indexed by r.
    pub trace_stats: Vec<f64>,
    /// p-value of the trace test at each hypothesised rank.
    pub vector_pvalues: Vec<f64>,
    pub rank: usize,
    /// Eigenvectors ordered by eigenvalue, one per symbol.
    pub vectors: Vec<CointegratingVector>,
    pub nobs: usize,
    pub lag_p: usize,
    pub alpha: f64,
}

struct Core {
    eigenvalues: Vec<f64>,
    /// Columns are eigenvectors over (scaled levels, constant).
    vectors: DMatrix<f64>,
    scales: Vec<f64>,
    nobs: usize,
}

fn cross(a: &DMatrix<f64>, b: &DMatrix<f64>, m: f64) -> DMatrix<f64> {
    a.transpose() * b / m
}

/// Largest over smallest eigenvalue after diagonal equilibration.
fn condition(s: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..s.nrows())
        .map(|i| s[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let eq = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / (d[i] * d[j]));
    let ev = SymmetricEigen::new(eq).eigenvalues;
    let (lo, hi) = ev
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn core(columns: &[Vec<f64>], lag_p: usize) -> Result<Core, StatsError> {
    let n = columns.len();
    if n == 0 {
        return Err(StatsError::Dimensions("no series".into()));
    }
    if lag_p == 0 {
        return Err(StatsError::Dimensions(
            "VAR order must be at least 1".into(),
        ));
    }
    let t = columns[0].len();
    if columns.iter().any(|c| c.len() != t) {
        return Err(StatsError::Dimensions("series lengths differ".into()));
    }
    let needed = lag_p + n * lag_p + 10;
    if t < needed {
        return Err(StatsError::TooShort { needed, got: t });
    }

    let mut scales = Vec::with_capacity(n);
    for c in columns {
        let d: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(StatsError::Degenerate(
                "series with no variation in differences".into(),
            ));
        }
        scales.push(sd);
    }
    let x = |j: usize, i: usize| columns[j][i] / scales[j];

    let m = t - lag_p;
    let first = lag_p;
    let z0 = DMatrix::from_fn(m, n, |r, j| x(j, first + r) - x(j, first + r - 1));
    let z1 = DMatrix::from_fn(
        m,
        n + 1,
        |r, j| if j < n { x(j, first + r - 1) } else { 1.0 },
    );
    let (r0, r1) = if lag_p > 1 {
        let k = n * (lag_p - 1);
        let z2 = DMatrix::from_fn(m, k, |r, c| {
            let (lag, j) = (c / n + 1, c % n);
            let i = first + r - lag;
            x(j, i) - x(j, i - 1)
        });
        let chol = Cholesky::new(z2.transpose() * &z2).ok_or(StatsError::Singular)?;
        let r0 = &z0 - &z2 * chol.solve(&(z2.transpose() * &z0));
        let r1 = &z1 - &z2 * chol.solve(&(z2.transpose() * &z1));
        (r0, r1)
    } else {
        (z0, z1)
    };

    let mf = m as f64;
    let s00 = cross(&r0, &r0, mf);
    let s11 = cross(&r1, &r1, mf);
    let s01 = cross(&r0, &r1, mf);
    for s in [&s00, &s11] {
        let cond = condition(s);
        if cond > COND_LIMIT {
            return Err(StatsError::Conditioning { cond });
        }
    }

    let l11 = Cholesky::new(s11).ok_or(StatsError::Conditioning {
        cond: f64::INFINITY,
    })?;
    let c00 = Cholesky::new(s00).ok_or(StatsError::Conditioning {
        cond: f64::INFINITY,
    })?;
    // S10 S00^-1 S01, whitened by the Cholesky factor of S11.
    let mmat = s01.transpose() * c00.solve(&s01);
    let l = l11.l();
    let a = l
        .solve_lower_triangular(&mmat)
        .ok_or(StatsError::Singular)?;
    let c = l
        .solve_lower_triangular(&a.transpose())
        .ok_or(StatsError::Singular)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..n + 1).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    order.truncate(n);
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].clamp(0.0, 1.0 - 1e-15))
        .collect();
    let u = DMatrix::from_fn(n + 1, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or(StatsError::Singular)?;

    Ok(Core {
        eigenvalues,
        vectors,
        scales,
        nobs: m,
    })
}

fn traces(eigenvalues: &[f64], nobs: usize) -> Vec<f64> {
    let n = eigenvalues.len();
    (0..n)
        .map(|r| -(nobs as f64) * eigenvalues[r..].iter().map(|l| (1.0 - l).ln()).sum::<f64>())
        .collect()
}

/// Trace statistics for every hypothesised rank, on raw columns.
pub(crate) fn trace_statistics(columns: &[Vec<f64>], lag_p: usize) -> Result<Vec<f64>, StatsError> {
    let c = core(columns, lag_p)?;
    Ok(traces(&c.eigenvalues, c.nobs))
}

/// Johansen trace test on every column of the panel. `lag_p` is the VAR
/// order in levels, so `lag_p - 1` lagged differences are partialled out.
/// The rank is the first r whose trace test does not reject at `alpha`,
/// capped at n-1.
pub fn johansen_test(
    panel: &AlignedPanel,
    lag_p: usize,
    alpha: f64,
) -> Result<JohansenResult, StatsError> {
    johansen_test_with(panel, lag_p, alpha, NullTables::global())
}

pub(crate) fn johansen_test_with(
    panel: &AlignedPanel,
    lag_p: usize,
    alpha: f64,
    tables: &NullTables,
) -> Result<JohansenResult, StatsError> {
    let n = panel.n_symbols();
    if n < 2 {
        return Err(StatsError::Dimensions("need at least two symbols".into()));
    }
    let columns: Vec<Vec<f64>> = (0..n).map(|j| panel.column_at(j).to_vec()).collect();
    let c = core(&columns, lag_p)?;
    let trace_stats = traces(&c.eigenvalues, c.nobs);
    let t = panel.len();
    let vector_pvalues: Vec<f64> = trace_stats
        .iter()
        .enumerate()
        .map(|(r, stat)| tables.pvalue(TestKind::JohansenTrace { dims: n - r }, t, *stat))
        .collect();
    let rank = vector_pvalues
        .iter()
        .position(|p| *p >= alpha)
        .unwrap_or(n)
        .min(n - 1);
    let vectors = (0..n)
        .map(|k| CointegratingVector {
            weights: (0..n).map(|j| c.vectors[(j, k)] / c.scales[j]).collect(),
            intercept: c.vectors[(n, k)],
        })
        .collect();
    Ok(JohansenResult {
        symbols: panel.symbols().to_vec(),
        eigenvalues: c.eigenvalues,
        trace_stats,
        vector_pvalues,
        rank,
        vectors,
        nobs: c.nobs,
        lag_p,
        alpha,
    })
}
