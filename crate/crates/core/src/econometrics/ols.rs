use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

/// Ordinary least squares estimates with classical standard errors.
///
/// `coef_stderr`, `coef_tstat` and `coef_pvalue` list the intercept first
/// when one was fitted, then the slopes in column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub coef_stderr: Vec<f64>,
    pub coef_tstat: Vec<f64>,
    pub coef_pvalue: Vec<f64>,
    pub ssr: f64,
    pub nobs: usize,
    pub with_intercept: bool,
}

impl OlsFit {
    pub fn df_resid(&self) -> usize {
        self.nobs - self.beta.len() - usize::from(self.with_intercept)
    }

    pub fn sigma(&self) -> f64 {
        (self.ssr / self.df_resid() as f64).sqrt()
    }
}

/// Relative threshold on the diagonal of R (columns scaled to unit norm).
const RANK_TOL: f64 = 1e-10;

/// Fits `y = alpha + X beta + e`. Columns are scaled to unit norm before the
/// QR factorisation so the rank test does not depend on units.
pub fn ols_fit(y: &[f64], x: &DMatrix<f64>, with_intercept: bool) -> Result<OlsFit, StatsError> {
    let n = y.len();
    if x.nrows() != n {
        return Err(StatsError::Dimensions(format!(
            "{} rows in X for {} observations",
            x.nrows(),
            n
        )));
    }
    let k = x.ncols() + usize::from(with_intercept);
    if n <= k {
        return Err(StatsError::TooShort {
            needed: k + 1,
            got: n,
        });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(StatsError::Degenerate("non-finite input".into()));
    }

    let mut design = DMatrix::<f64>::zeros(n, k);
    let offset = usize::from(with_intercept);
    if with_intercept {
        design.column_mut(0).fill(1.0);
    }
    for j in 0..x.ncols() {
        design.column_mut(j + offset).copy_from(&x.column(j));
    }
    let mut scale = vec![0.0; k];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = design.column(j).norm();
        if norm == 0.0 {
            return Err(StatsError::Singular);
        }
        *s = norm;
        design.column_mut(j).unscale_mut(norm);
    }

    let qr = design.clone().qr();
    let r = qr.r();
    if (0..k).any(|j| r[(j, j)].abs() <= RANK_TOL) {
        return Err(StatsError::Singular);
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coef_scaled = r.solve_upper_triangular(&qty).ok_or(StatsError::Singular)?;
    let resid = &yv - &design * &coef_scaled;
    let ssr = resid.norm_squared();
    let df = (n - k) as f64;
    let s2 = ssr / df;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(StatsError::Singular)?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let coef: Vec<f64> = (0..k).map(|j| coef_scaled[j] / scale[j]).collect();
    let stderr: Vec<f64> = (0..k)
        .map(|j| (s2 * xtx_inv[(j, j)]).sqrt() / scale[j])
        .collect();
    let tstat: Vec<f64> = coef.iter().zip(&stderr).map(|(c, s)| c / s).collect();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::Degenerate(e.to_string()))?;
    let pvalue: Vec<f64> = tstat
        .iter()
        .map(|t| {
            if t.is_finite() {
                2.0 * dist.cdf(-t.abs())
            } else {
                0.0
            }
        })
        .collect();

    Ok(OlsFit {
        alpha: if with_intercept { coef[0] } else { 0.0 },
        beta: coef[offset..].to_vec(),
        residuals: resid.as_slice().to_vec(),
        coef_stderr: stderr,
        coef_tstat: tstat,
        coef_pvalue: pvalue,
        ssr,
        nobs: n,
        with_intercept,
    })
}

/// Convenience wrapper taking regressors as column slices.
pub fn ols_fit_columns(
    y: &[f64],
    columns: &[&[f64]],
    with_intercept: bool,
) -> Result<OlsFit, StatsError> {
    let n = y.len();
    for c in columns {
        if c.len() != n {
            return Err(StatsError::Dimensions(format!(
                "column of length {} for {} observations",
                c.len(),
                n
            )));
        }
    }
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    ols_fit(y, &x, with_intercept)
}

/// Light normal-equation regression used by the unit-root statistics and
/// their Monte Carlo null tables.
pub(crate) struct QuickFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub(crate) fn quick_fit(y: &[f64], columns: &[Vec<f64>]) -> Option<QuickFit> {
    let n = y.len();
    let k = columns.len();
    if n <= k || k == 0 {
        return None;
    }
    let scale: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return None;
    }
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for a in 0..k {
        let ca = &columns[a];
        for b in 0..=a {
            let cb = &columns[b];
            let dot: f64 = ca.iter().zip(cb).map(|(p, q)| p * q).sum();
            let v = dot / (scale[a] * scale[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        xty[a] = ca.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / scale[a];
    }
    let chol = gram.clone().cholesky()?;
    let coef_scaled = chol.solve(&xty);
    let mut ssr = 0.0;
    for i in 0..n {
        let mut fitted = 0.0;
        for j in 0..k {
            fitted += columns[j][i] * coef_scaled[j] / scale[j];
        }
        let e = y[i] - fitted;
        ssr += e * e;
    }
    let s2 = ssr / (n - k) as f64;
    let inv = chol.inverse();
    Some(QuickFit {
        coef: (0..k).map(|j| coef_scaled[j] / scale[j]).collect(),
        stderr: (0..k)
            .map(|j| (s2 * inv[(j, j)]).sqrt() / scale[j])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = ols_fit_columns(&y, &[&x], true).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-12);
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!(matches!(
            ols_fit_columns(&y, &[&x, &x], true),
            Err(StatsError::Singular)
        ));
        let ones = vec![3.0; 20];
        assert!(matches!(
            ols_fit_columns(&y, &[&ones], true),
            Err(StatsError::Singular)
        ));
    }

    #[test]
    fn slope_sampling_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = ols_fit_columns(&y, &[&x], true).unwrap();
        assert!((0.97..=1.03).contains(&fit.beta[0]), "beta {}", fit.beta[0]);
        // The slope t-stat is ~100 and its p-value is effectively zero.
        assert!(fit.coef_pvalue[1] < 1e-12);
    }

    #[test]
    fn residuals_orthogonal_and_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..500).map(|i| (i as f64) * 0.01 + a[i] * 0.3).collect();
        let y: Vec<f64> = (0..500)
            .map(|i| 3.0 - a[i] + 2.0 * b[i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = ols_fit_columns(&y, &[&a, &b], true).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rn = norm(&fit.residuals);
        for col in [&a, &b] {
            let dot: f64 = col.iter().zip(&fit.residuals).map(|(p, q)| p * q).sum();
            assert!(dot.abs() <= 1e-8 * norm(col) * rn);
        }
        let mean = fit.residuals.iter().sum::<f64>() / 500.0;
        assert!(mean.abs() <= 1e-8 * fit.sigma());
    }

    #[test]
    fn quick_fit_agrees_with_qr() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = a
            .iter()
            .map(|v| 0.5 * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let qr = ols_fit_columns(&y, &[&a], false).unwrap();
        let quick = quick_fit(&y, std::slice::from_ref(&a)).unwrap();
        assert!((qr.beta[0] - quick.coef[0]).abs() < 1e-12);
        assert!((qr.coef_stderr[0] - quick.stderr[0]).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let y = [1.0, 2.0];
        let x = [0.0, 1.0];
        assert!(matches!(
            ols_fit_columns(&y, &[&x], true),
            Err(StatsError::TooShort { .. })
        ));
    }
}
