//! UTC calendar buckets shared by observations and model layers.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, SecondsFormat, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalendarError {
    #[error("unknown resolution {0:?} (expected hourly, daily, monthly or annual)")]
    UnknownResolution(String),
    #[error("cannot parse date {0:?}")]
    BadDate(String),
    #[error("{ts} is not aligned to a {resolution} boundary")]
    Misaligned { ts: String, resolution: Resolution },
}

/// Temporal resolution, ordered from finest to coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Hourly,
    Daily,
    Monthly,
    Annual,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [
        Resolution::Hourly,
        Resolution::Daily,
        Resolution::Monthly,
        Resolution::Annual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Hourly => "hourly",
            Resolution::Daily => "daily",
            Resolution::Monthly => "monthly",
            Resolution::Annual => "annual",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resolution {
    type Err = CalendarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hourly" | "hour" => Ok(Resolution::Hourly),
            "daily" | "day" => Ok(Resolution::Daily),
            "monthly" | "month" => Ok(Resolution::Monthly),
            "annual" | "yearly" | "year" => Ok(Resolution::Annual),
            _ => Err(CalendarError::UnknownResolution(s.to_string())),
        }
    }
}

fn ymd(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).single().expect("valid calendar date")
}

/// Start of the bucket containing `ts`.
pub fn bucket_start(ts: DateTime<Utc>, res: Resolution) -> DateTime<Utc> {
    match res {
        Resolution::Hourly => ts
            .with_minute(0)
            .and_then(|t| t.with_second(0))
            .and_then(|t| t.with_nanosecond(0))
            .expect("truncation stays valid"),
        Resolution::Daily => ymd(ts.year(), ts.month(), ts.day()),
        Resolution::Monthly => ymd(ts.year(), ts.month(), 1),
        Resolution::Annual => ymd(ts.year(), 1, 1),
    }
}

/// Start of the bucket following the one that starts at `start`.
pub fn next_bucket(start: DateTime<Utc>, res: Resolution) -> DateTime<Utc> {
    match res {
        Resolution::Hourly => start + Duration::hours(1),
        Resolution::Daily => start + Duration::days(1),
        Resolution::Monthly => {
            if start.month() == 12 {
                ymd(start.year() + 1, 1, 1)
            } else {
                ymd(start.year(), start.month() + 1, 1)
            }
        }
        Resolution::Annual => ymd(start.year() + 1, 1, 1),
    }
}

pub fn is_aligned(ts: DateTime<Utc>, res: Resolution) -> bool {
    bucket_start(ts, res) == ts
}

/// Half-open calendar interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub resolution: Resolution,
}

impl Period {
    /// The calendar bucket of `res` starting at `start`.
    pub fn bucket(res: Resolution, start: DateTime<Utc>) -> Result<Self, CalendarError> {
        if !is_aligned(start, res) {
            return Err(CalendarError::Misaligned { ts: format_timestamp(start), resolution: res });
        }
        Ok(Period { start, end: next_bucket(start, res), resolution: res })
    }

    pub fn year(year: i32) -> Self {
        let start = ymd(year, 1, 1);
        Period { start, end: next_bucket(start, Resolution::Annual), resolution: Resolution::Annual }
    }

    pub fn month(year: i32, month: u32) -> Self {
        let start = ymd(year, month, 1);
        Period { start, end: next_bucket(start, Resolution::Monthly), resolution: Resolution::Monthly }
    }

    /// Number of whole hours in the period (leap-aware).
    pub fn hours(&self) -> u32 {
        (self.end - self.start).num_hours() as u32
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.start <= ts && ts < self.end
    }
}

/// Parses a date selector: `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, `YYYY-MM-DDTHH`
/// or a full RFC 3339 timestamp on an hour boundary.
pub fn parse_period(s: &str) -> Result<Period, CalendarError> {
    let bad = || CalendarError::BadDate(s.to_string());
    let t = s.trim();
    let parts: Vec<&str> = t.split('-').collect();
    match parts.as_slice() {
        [y] if y.len() == 4 => {
            let year: i32 = y.parse().map_err(|_| bad())?;
            Ok(Period::year(year))
        }
        [y, m] if y.len() == 4 => {
            let year: i32 = y.parse().map_err(|_| bad())?;
            let month: u32 = m.parse().map_err(|_| bad())?;
            NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(bad)?;
            Ok(Period::month(year, month))
        }
        [_, _, d] if d.len() == 2 => {
            let date = NaiveDate::parse_from_str(t, "%Y-%m-%d").map_err(|_| bad())?;
            let start = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"));
            Period::bucket(Resolution::Daily, start)
        }
        _ => {
            let ts = parse_timestamp(t)?;
            Period::bucket(Resolution::Hourly, ts)
        }
    }
}

/// Parses RFC 3339, `YYYY-MM-DDTHH:MM[:SS]` (UTC implied), `YYYY-MM-DDTHH`
/// or a bare date.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, CalendarError> {
    let t = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(n) = chrono::NaiveDateTime::parse_from_str(t, fmt) {
            return Ok(Utc.from_utc_datetime(&n));
        }
    }
    if let Some((d, h)) = t.split_once('T') {
        if h.len() == 2 {
            if let (Ok(date), Ok(hour)) = (NaiveDate::parse_from_str(d, "%Y-%m-%d"), h.parse::<u32>()) {
                if let Some(n) = date.and_hms_opt(hour, 0, 0) {
                    return Ok(Utc.from_utc_datetime(&n));
                }
            }
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Ok(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight")));
    }
    Err(CalendarError::BadDate(s.to_string()))
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}
