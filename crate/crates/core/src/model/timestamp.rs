use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A UTC instant at microsecond precision.
///
/// The canonical text form is ISO-8601 with exactly six fractional digits
/// and a trailing `Z`, e.g. `2024-03-01T12:00:00.000000Z`. Because the form
/// is fixed-width, lexicographic order on the text equals chronological
/// order, and text -> value -> text round-trips byte-identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimestampError {
    #[error("timestamp {0:?} is not in canonical form YYYY-MM-DDTHH:MM:SS.ffffffZ")]
    BadFormat(String),
    #[error("timestamp {0:?} has out-of-range date or time components")]
    OutOfRange(String),
}

impl Timestamp {
    pub const fn from_micros(micros: i64) -> Self {
        Timestamp(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// Current wall-clock time, truncated to microseconds.
    pub fn now() -> Self {
        let now = SystemTime::now();
        let micros = match now.duration_since(UNIX_EPOCH) {
            Ok(d) => d.as_micros() as i64,
            Err(e) => -(e.duration().as_micros() as i64),
        };
        Timestamp(micros)
    }

    pub fn parse(text: &str) -> Result<Self, TimestampError> {
        let b = text.as_bytes();
        if b.len() != 27 {
            return Err(TimestampError::BadFormat(text.to_string()));
        }
        let digits = |range: std::ops::Range<usize>| b[range].iter().all(u8::is_ascii_digit);
        let shape_ok = digits(0..4)
            && b[4] == b'-'
            && digits(5..7)
            && b[7] == b'-'
            && digits(8..10)
            && b[10] == b'T'
            && digits(11..13)
            && b[13] == b':'
            && digits(14..16)
            && b[16] == b':'
            && digits(17..19)
            && b[19] == b'.'
            && digits(20..26)
            && b[26] == b'Z';
        if !shape_ok {
            return Err(TimestampError::BadFormat(text.to_string()));
        }
        let num = |range: std::ops::Range<usize>| -> u32 { text[range].parse().unwrap() };
        let date = NaiveDate::from_ymd_opt(num(0..4) as i32, num(5..7), num(8..10))
            .ok_or_else(|| TimestampError::OutOfRange(text.to_string()))?;
        let dt = date
            .and_hms_micro_opt(num(11..13), num(14..16), num(17..19), num(20..26))
            .ok_or_else(|| TimestampError::OutOfRange(text.to_string()))?;
        Ok(Timestamp(dt.and_utc().timestamp_micros()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt =
            DateTime::<Utc>::from_timestamp_micros(self.0).expect("timestamp out of chrono range");
        write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S%.6fZ"))
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Timestamp::parse(&text).map_err(de::Error::custom)
    }
}

/// Signed difference `inserted - origin` in whole microseconds.
pub fn sec_diff_micros(origin: Timestamp, inserted: Timestamp) -> i64 {
    inserted.0 - origin.0
}

/// Signed travel time `inserted - origin` in seconds at microsecond
/// resolution. Negative values are returned as-is; clock skew is reported,
/// not hidden.
pub fn compute_sec_diff(origin: Timestamp, inserted: Timestamp) -> f64 {
    sec_diff_micros(origin, inserted) as f64 / 1e6
}
