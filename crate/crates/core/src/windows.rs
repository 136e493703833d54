//! Walk-forward formation/trading windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("formation and trading lengths must be at least one day")]
    ZeroLength,
    #[error("range {start}..{end} is shorter than one formation plus trading span")]
    RangeTooShort { start: Timestamp, end: Timestamp },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkForwardWindow {
    pub formation_start: Timestamp,
    pub formation_end: Timestamp,
    pub trading_start: Timestamp,
    pub trading_end: Timestamp,
}

/// Windows whose formation begins at `range_start` and which advance by the
/// trading length. A window is kept while `trading_end <= range_end`.
pub fn walk_forward_windows(
    range_start: Timestamp,
    range_end: Timestamp,
    formation_days: u32,
    trading_days: u32,
) -> Result<Vec<WalkForwardWindow>, WindowError> {
    if formation_days == 0 || trading_days == 0 {
        return Err(WindowError::ZeroLength);
    }
    let mut out = Vec::new();
    let mut formation_start = range_start;
    loop {
        let formation_end = formation_start.plus_days(formation_days as i64);
        let trading_end = formation_end.plus_days(trading_days as i64);
        if trading_end > range_end {
            break;
        }
        out.push(WalkForwardWindow {
            formation_start,
            formation_end,
            trading_start: formation_end,
            trading_end,
        });
        formation_start = formation_start.plus_days(trading_days as i64);
    }
    if out.is_empty() {
        return Err(WindowError::RangeTooShort {
            start: range_start,
            end: range_end,
        });
    }
    Ok(out)
}
