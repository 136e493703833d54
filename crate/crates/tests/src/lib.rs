//! Seeded processes and market fixtures shared by the acceptance suite.

use std::fmt::Display;
use std::io::Write;

use cointarb::runner::MarketData;
use cointarb::synth::{synth_linear_market, MarketSynthSpec, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(seed: u64) -> impl FnMut() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move || StandardNormal.sample(&mut rng)
}

/// `y_t = y_{t-1} + e_t` from zero.
pub fn random_walk(t: usize, seed: u64) -> Vec<f64> {
    let mut e = noise(seed);
    let mut y = 0.0;
    (0..t)
        .map(|_| {
            y += e();
            y
        })
        .collect()
}

/// `y_t = phi y_{t-1} + e_t` from zero.
pub fn ar1(phi: f64, t: usize, seed: u64) -> Vec<f64> {
    let mut e = noise(seed);
    let mut y = 0.0;
    (0..t)
        .map(|_| {
            y = phi * y + e();
            y
        })
        .collect()
}

/// Exponential smooth transition AR: `dy_t = gamma y_{t-1} (1 - exp(-curvature y_{t-1}^2)) + e_t`.
pub fn estar(gamma: f64, curvature: f64, t: usize, seed: u64) -> Vec<f64> {
    let mut e = noise(seed);
    let mut y = 0.0f64;
    (0..t)
        .map(|_| {
            y += gamma * y * (1.0 - (-curvature * y * y).exp()) + e();
            y
        })
        .collect()
}

/// Two linear contracts whose XBT prices differ by a mean-reverting spread
/// (rate 0.005 per minute) around a driftless common trend.
pub fn cointegrated_pair(minutes: usize, seed: u64) -> MarketData {
    let spec =
        SynthSpec::new(2, 0.005, 2e-5, 5e-6, minutes, seed, vec![1.0, -1.0]).with_base_price(0.05);
    let (book, streams) = synth_linear_market(
        &spec,
        1e-6,
        &MarketSynthSpec {
            seed: seed + 1,
            ..Default::default()
        },
    )
    .unwrap();
    MarketData::from_streams(book, streams)
}

/// Writes one verdict line and passes the outcome through. It goes straight
/// to stderr so the test harness shows it for passing tests too.
pub fn verdict(name: &str, pass: bool, detail: impl Display) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "{tag} {name}: {detail}").ok();
    pass
}
