//! Ornstein-Uhlenbeck calibration, half-life and z-score look-back.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::econometrics::{ols_fit_columns, StatsError};

pub const MIN_OBSERVATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum OuError {
    #[error("need at least {MIN_OBSERVATIONS} observations, got {0}")]
    TooShort(usize),
    #[error("spread is constant")]
    Degenerate,
    #[error("spread is not mean reverting (slope {slope:.3e} >= 0)")]
    NonMeanReverting { slope: f64 },
    #[error("mean-reversion rate {0} must be positive")]
    NonPositiveTheta(f64),
    #[error("mean-reversion rate {0} per minute exceeds 1")]
    ThetaTooLarge(f64),
    #[error("sampling interval must be positive")]
    BadInterval,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate per minute.
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Sampling interval in minutes.
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HalfLife {
    pub minutes: f64,
}

impl HalfLife {
    pub fn hours(&self) -> f64 {
        self.minutes / 60.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookbackWindow {
    pub n_minutes: usize,
}

impl LookbackWindow {
    /// EMA decay with the same centre of mass as an N-point SMA.
    pub fn lambda(&self) -> f64 {
        2.0 / (self.n_minutes as f64 + 1.0)
    }
}

/// Regresses ΔS_t on S_{t-1} with an intercept: θ = -b/dt, μ = a/(θ dt),
/// σ = residual std / √dt.
pub fn calibrate_ou(spread: &[f64], dt: f64) -> Result<OuParams, OuError> {
    if !(dt > 0.0) {
        return Err(OuError::BadInterval);
    }
    if spread.len() < MIN_OBSERVATIONS {
        return Err(OuError::TooShort(spread.len()));
    }
    let first = spread[0];
    if spread.iter().all(|v| *v == first) {
        return Err(OuError::Degenerate);
    }
    let lagged = &spread[..spread.len() - 1];
    let diff: Vec<f64> = spread.windows(2).map(|w| w[1] - w[0]).collect();
    let fit = ols_fit_columns(&diff, &[lagged], true)?;
    let b = fit.beta[0];
    if b >= 0.0 {
        return Err(OuError::NonMeanReverting { slope: b });
    }
    let theta = -b / dt;
    Ok(OuParams {
        theta,
        mu: fit.alpha / (theta * dt),
        sigma: fit.sigma() / dt.sqrt(),
        dt,
    })
}

pub fn half_life(params: &OuParams) -> Result<HalfLife, OuError> {
    if !(params.theta > 0.0) {
        return Err(OuError::NonPositiveTheta(params.theta));
    }
    Ok(HalfLife {
        minutes: std::f64::consts::LN_2 / params.theta,
    })
}

/// λ = θ and N = round(2/λ - 1), half away from zero, at least 2.
pub fn lookback_window(params: &OuParams) -> Result<LookbackWindow, OuError> {
    let theta = params.theta;
    if !(theta > 0.0) {
        return Err(OuError::NonPositiveTheta(theta));
    }
    if theta > 1.0 {
        return Err(OuError::ThetaTooLarge(theta));
    }
    let n = (2.0 / theta - 1.0).round().max(2.0);
    Ok(LookbackWindow {
        n_minutes: n as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ou_path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(theta: f64) -> OuParams {
        OuParams {
            theta,
            mu: 0.0,
            sigma: 1.0,
            dt: 1.0,
        }
    }

    #[test]
    fn half_life_arithmetic() {
        assert!((half_life(&params(std::f64::consts::LN_2)).unwrap().minutes - 1.0).abs() < 1e-15);
        assert!((half_life(&params(0.001)).unwrap().minutes - 693.147).abs() < 1e-3);
        assert!(half_life(&params(0.0)).is_err());
    }

    #[test]
    fn lookback_arithmetic() {
        assert_eq!(lookback_window(&params(0.5)).unwrap().n_minutes, 3);
        assert_eq!(lookback_window(&params(0.001)).unwrap().n_minutes, 1999);
        assert_eq!(
            lookback_window(&params(std::f64::consts::LN_2 / 900.0))
                .unwrap()
                .n_minutes,
            2596
        );
        assert_eq!(lookback_window(&params(1.0)).unwrap().n_minutes, 2);
        assert!(matches!(
            lookback_window(&params(1.5)),
            Err(OuError::ThetaTooLarge(_))
        ));
        assert!(lookback_window(&params(-0.1)).is_err());
    }

    #[test]
    fn recovers_planted_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = ou_path(0.01, 3.0, 0.2, 200_000, &mut rng);
        let p = calibrate_ou(&s, 1.0).unwrap();
        assert!((0.009..=0.011).contains(&p.theta), "theta {}", p.theta);
        assert!((p.mu - 3.0).abs() < 0.1);
    }

    #[test]
    fn constant_spread_is_degenerate() {
        assert!(matches!(
            calibrate_ou(&[2.0; 200], 1.0),
            Err(OuError::Degenerate)
        ));
        assert!(matches!(
            calibrate_ou(&[2.0; 20], 1.0),
            Err(OuError::TooShort(20))
        ));
    }

    #[test]
    fn scaling_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ou_path(0.05, 1.0, 0.3, 5000, &mut rng);
        let k = 37.5;
        let big: Vec<f64> = s.iter().map(|v| v * k).collect();
        let a = calibrate_ou(&s, 1.0).unwrap();
        let b = calibrate_ou(&big, 1.0).unwrap();
        assert!((a.theta - b.theta).abs() < 1e-9);
        assert!((a.mu * k - b.mu).abs() < 1e-9 * b.mu.abs().max(1.0));
        assert!((a.sigma * k - b.sigma).abs() < 1e-9 * b.sigma.abs().max(1.0));
    }
}
