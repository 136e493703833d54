//! Rolling z-score and threshold re-cross signals.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub enter: f64,
    pub exit: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            enter: 2.0,
            exit: 1.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if self.enter > self.exit && self.exit > 0.0 {
            Ok(())
        } else {
            Err(format!(
                "thresholds need enter > exit > 0, got {} and {}",
                self.enter, self.exit
            ))
        }
    }
}

/// `z` is `None` during warm-up and when the window has no variation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScorePoint {
    pub ts: Timestamp,
    pub z: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Trailing `n`-point mean and sample standard deviation including the
/// current point. The first point of `spread` sits at `start`.
pub fn rolling_zscore(start: Timestamp, spread: &[f64], n: usize) -> Vec<ZScorePoint> {
    assert!(n >= 2, "look-back must be at least 2");
    let mut out = Vec::with_capacity(spread.len());
    let nf = n as f64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    // Monotone deques of indices for the window min and max.
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut hi: VecDeque<usize> = VecDeque::new();

    for (t, &x) in spread.iter().enumerate() {
        while lo.back().is_some_and(|&i| spread[i] >= x) {
            lo.pop_back();
        }
        lo.push_back(t);
        while hi.back().is_some_and(|&i| spread[i] <= x) {
            hi.pop_back();
        }
        hi.push_back(t);
        if t >= n {
            let old = t - n;
            if lo.front() == Some(&old) {
                lo.pop_front();
            }
            if hi.front() == Some(&old) {
                hi.pop_front();
            }
        }

        if t < n {
            let k = (t + 1) as f64;
            let d = x - mean;
            mean += d / k;
            m2 += d * (x - mean);
        } else if t % n == 0 {
            // Periodic exact recompute bounds drift from the sliding update.
            let w = &spread[t + 1 - n..=t];
            mean = w.iter().sum::<f64>() / nf;
            m2 = w.iter().map(|v| (v - mean).powi(2)).sum();
        } else {
            let old = spread[t - n];
            let new_mean = mean + (x - old) / nf;
            m2 += (x - old) * (x - new_mean + old - mean);
            mean = new_mean;
        }

        let ts = start + t as i64;
        if t + 1 < n {
            out.push(ZScorePoint {
                ts,
                z: None,
                mean: None,
                std: None,
            });
            continue;
        }
        let flat = spread[*lo.front().unwrap()] == spread[*hi.front().unwrap()];
        let std = if flat {
            0.0
        } else {
            (m2.max(0.0) / (nf - 1.0)).sqrt()
        };
        let z = (!flat && std > 0.0).then(|| (x - mean) / std);
        out.push(ZScorePoint {
            ts,
            z,
            mean: Some(mean),
            std: Some(std),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    EnterLong,
    ExitLong,
    EnterShort,
    ExitShort,
}

impl SignalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignalKind::EnterLong => "EnterLong",
            SignalKind::ExitLong => "ExitLong",
            SignalKind::EnterShort => "EnterShort",
            SignalKind::ExitShort => "ExitShort",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub ts: Timestamp,
    pub kind: SignalKind,
    pub z_tminus1: f64,
    pub z_tminus2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionState {
    Flat,
    Long,
    Short,
}

/// Raw rule hits at a point given z_{t-1} and z_{t-2}. Entries fire on the
/// re-cross back inside ±enter, or on the outward cross with `first_touch`.
pub fn rule_hits(z1: f64, z2: f64, th: &Thresholds, first_touch: bool) -> Vec<SignalKind> {
    let (e, x) = (th.enter, th.exit);
    let mut hits = Vec::new();
    let enter_long = if first_touch {
        z2 > -e && z1 < -e
    } else {
        z2 < -e && z1 > -e
    };
    let enter_short = if first_touch {
        z2 < e && z1 > e
    } else {
        z2 > e && z1 < e
    };
    if enter_long {
        hits.push(SignalKind::EnterLong);
    }
    if z2 > -x && z1 < -x {
        hits.push(SignalKind::ExitLong);
    }
    if enter_short {
        hits.push(SignalKind::EnterShort);
    }
    if z2 < x && z1 > x {
        hits.push(SignalKind::ExitShort);
    }
    hits
}

/// Applies one event to the position state machine; returns the accepted
/// event, if any. Exits are considered before entries.
pub fn step_state(
    state: PositionState,
    hits: &[SignalKind],
) -> (PositionState, Option<SignalKind>) {
    use PositionState::*;
    use SignalKind::*;
    match state {
        Long if hits.contains(&ExitLong) => (Flat, Some(ExitLong)),
        Short if hits.contains(&ExitShort) => (Flat, Some(ExitShort)),
        Flat if hits.contains(&EnterLong) => (Long, Some(EnterLong)),
        Flat if hits.contains(&EnterShort) => (Short, Some(EnterShort)),
        s => (s, None),
    }
}

/// Events at point t from z_{t-1} and z_{t-2}, filtered through the
/// flat/long/short state machine. At most one event per point; undefined z
/// values break any crossing.
pub fn gen_signals(z: &[ZScorePoint], th: &Thresholds, first_touch: bool) -> Vec<SignalEvent> {
    let mut state = PositionState::Flat;
    let mut out = Vec::new();
    for t in 2..z.len() {
        let (Some(z1), Some(z2)) = (z[t - 1].z, z[t - 2].z) else {
            continue;
        };
        let hits = rule_hits(z1, z2, th, first_touch);
        let (next, accepted) = step_state(state, &hits);
        state = next;
        if let Some(kind) = accepted {
            out.push(SignalEvent {
                ts: z[t].ts,
                kind,
                z_tminus1: z1,
                z_tminus2: z2,
            });
        }
    }
    out
}
