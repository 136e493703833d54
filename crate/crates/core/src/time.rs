//! Minute-resolution UTC timestamps.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_HOUR: i64 = 60;
pub const MINUTES_PER_DAY: i64 = 24 * MINUTES_PER_HOUR;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeError {
    #[error("cannot parse timestamp {0:?}")]
    Unparsable(String),
    #[error("timestamp {0:?} is not on a whole minute")]
    SubMinute(String),
}

/// Whole minutes since the Unix epoch, UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_minutes(minutes: i64) -> Self {
        Timestamp(minutes)
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }

    /// Midnight UTC of the given calendar date.
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        Some(Self::from_naive(date.and_hms_opt(0, 0, 0)?))
    }

    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        Some(Self::from_naive(date.and_hms_opt(hour, minute, 0)?))
    }

    fn from_naive(naive: NaiveDateTime) -> Self {
        Timestamp(naive.and_utc().timestamp().div_euclid(60))
    }

    /// Accepts RFC 3339 (`2018-12-26T00:00:00Z`), a naive `YYYY-MM-DDTHH:MM[:SS]`
    /// read as UTC, or a bare date. Seconds must be zero.
    pub fn parse(text: &str) -> Result<Self, TimeError> {
        let text = text.trim();
        let naive = if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
            dt.with_timezone(&Utc).naive_utc()
        } else if let Ok(dt) = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S") {
            dt
        } else if let Ok(dt) = NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S") {
            dt
        } else if let Ok(dt) = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M") {
            dt
        } else if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            d.and_hms_opt(0, 0, 0).expect("midnight is valid")
        } else {
            return Err(TimeError::Unparsable(text.to_string()));
        };
        if naive.second() != 0 || naive.nanosecond() != 0 {
            return Err(TimeError::SubMinute(text.to_string()));
        }
        Ok(Self::from_naive(naive))
    }

    pub fn datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * 60, 0)
            .single()
            .expect("minute timestamps are always representable")
    }

    pub fn year_month(self) -> (i32, u32) {
        let dt = self.datetime();
        (dt.year(), dt.month())
    }

    /// Minute of the UTC day, 0..1440.
    pub fn minute_of_day(self) -> i64 {
        self.0.rem_euclid(MINUTES_PER_DAY)
    }

    pub fn plus_days(self, days: i64) -> Self {
        Timestamp(self.0 + days * MINUTES_PER_DAY)
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, minutes: i64) -> Timestamp {
        Timestamp(self.0 + minutes)
    }
}

impl Sub<i64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, minutes: i64) -> Timestamp {
        Timestamp(self.0 - minutes)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, other: Timestamp) -> i64 {
        self.0 - other.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let ts = Timestamp::parse("2018-12-26T00:00:00Z").unwrap();
        assert_eq!(ts, Timestamp::from_ymd(2018, 12, 26).unwrap());
        assert_eq!(ts.to_string(), "2018-12-26T00:00:00Z");
        assert_eq!(Timestamp::parse("2018-12-26 00:01:00").unwrap(), ts + 1);
        assert_eq!(Timestamp::parse("2018-12-26").unwrap(), ts);
    }

    #[test]
    fn rejects_seconds() {
        assert!(matches!(
            Timestamp::parse("2018-12-26T00:00:30Z"),
            Err(TimeError::SubMinute(_))
        ));
        assert!(Timestamp::parse("yesterday").is_err());
    }

    #[test]
    fn day_arithmetic() {
        let start = Timestamp::from_ymd(2018, 9, 27).unwrap();
        assert_eq!(
            start.plus_days(90),
            Timestamp::from_ymd(2018, 12, 26).unwrap()
        );
        assert_eq!(
            Timestamp::from_ymd_hm(2019, 1, 1, 8, 0)
                .unwrap()
                .minute_of_day(),
            480
        );
    }
}
