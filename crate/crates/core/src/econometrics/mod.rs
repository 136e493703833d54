//! Regression, unit-root and cointegration tests.

mod critical;
mod johansen;
mod ols;
mod unit_root;

pub use critical::{
    critical_values_mc, default_levels, CriticalValueTable, NullTables, TestKind, CACHE_DIR_ENV,
};
pub use johansen::{johansen_test, CointegratingVector, JohansenResult};
pub use ols::{ols_fit, ols_fit_columns, OlsFit};
pub use unit_root::{
    adf_test, adf_test_with, kss_test, kss_test_with, max_lag_schwert, table_kind, AdfResult,
    Deterministic, KssResult, LagRule, Rejection, UnitRootOptions, UnitRootResult, REPORT_LEVELS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("design matrix is rank deficient")]
    Singular,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("moment matrix condition number {cond:.3e} exceeds the limit")]
    Conditioning { cond: f64 },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("critical value cache: {0}")]
    Cache(String),
}
