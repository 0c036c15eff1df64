//! Local-time derivation from UTC timestamps with a fixed hour offset.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};

use crate::Timestamp;

/// Gainesville standard time.
pub const DEFAULT_TZ_OFFSET_HOURS: i32 = -5;

/// Converts UTC timestamps to local calendar fields using a single offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalClock {
    pub tz_offset_hours: i32,
}

impl Default for LocalClock {
    fn default() -> Self {
        Self {
            tz_offset_hours: DEFAULT_TZ_OFFSET_HOURS,
        }
    }
}

impl LocalClock {
    pub fn new(tz_offset_hours: i32) -> Self {
        Self { tz_offset_hours }
    }

    pub fn local(&self, t: Timestamp) -> NaiveDateTime {
        let shifted = t + i64::from(self.tz_offset_hours) * 3600;
        DateTime::from_timestamp(shifted, 0)
            .expect("timestamp within chrono range")
            .naive_utc()
    }

    pub fn local_date(&self, t: Timestamp) -> NaiveDate {
        self.local(t).date()
    }

    /// Local (date, hour-of-day) key used by the weather table.
    pub fn local_hour(&self, t: Timestamp) -> (NaiveDate, u32) {
        let local = self.local(t);
        (local.date(), local.hour())
    }

    pub fn is_weekday(&self, t: Timestamp) -> bool {
        !matches!(self.local(t).weekday(), Weekday::Sat | Weekday::Sun)
    }

    /// UTC timestamp of local midnight starting `date`.
    pub fn local_midnight(&self, date: NaiveDate) -> Timestamp {
        let utc = date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp();
        utc - i64::from(self.tz_offset_hours) * 3600
    }
}
