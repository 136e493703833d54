//! Cointegration pairs and basket trading research engine.

pub mod contract;
pub mod data;
pub mod econometrics;
pub mod exec;
pub mod metrics;
pub mod ou;
pub mod panel;
pub mod report;
pub mod runner;
pub mod signals;
pub mod spread;
pub mod synth;
pub mod time;
pub mod windows;
