use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use super::{data_lines, read_table, IngestError, LookupError};
use crate::calendar::LocalClock;
use crate::Timestamp;

/// Hourly weather condition labels keyed by local (date, hour).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeatherTable {
    entries: BTreeMap<(NaiveDate, u32), String>,
}

impl WeatherTable {
    /// Inserts one entry, rejecting a second label for the same hour.
    pub fn insert(&mut self, date: NaiveDate, hour: u32, condition: impl Into<String>) -> Result<(), IngestError> {
        if hour > 23 {
            return Err(IngestError::Invalid {
                what: "weather hour".into(),
                message: format!("{hour} not in 0..=23"),
            });
        }
        if self.entries.contains_key(&(date, hour)) {
            return Err(IngestError::Duplicate {
                file: "weather".into(),
                key: format!("{date} {hour}"),
            });
        }
        self.entries.insert((date, hour), condition.into());
        Ok(())
    }

    pub fn lookup(&self, date: NaiveDate, hour: u32) -> Result<&str, LookupError> {
        self.entries
            .get(&(date, hour))
            .map(String::as_str)
            .ok_or(LookupError { date, hour })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NaiveDate, u32), &String)> {
        self.entries.iter()
    }

    /// `date,hour,condition` lines, sorted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,hour,condition\n");
        for ((d, h), c) in &self.entries {
            out.push_str(&format!("{d},{h},{c}\n"));
        }
        out
    }
}

/// Labels counted as rain. Matching ignores ASCII case.
#[derive(Debug, Clone, PartialEq)]
pub struct RainLabels(BTreeSet<String>);

impl Default for RainLabels {
    fn default() -> Self {
        Self::new(["Rain", "Thunderstorm", "Drizzle"])
    }
}

impl RainLabels {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(labels.into_iter().map(|s| s.as_ref().trim().to_ascii_lowercase()).collect())
    }

    pub fn is_rain(&self, condition: &str) -> bool {
        self.0.contains(&condition.trim().to_ascii_lowercase())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Whether it was raining during the local hour containing `t`.
pub fn rain_indicator(
    w: &WeatherTable,
    t: Timestamp,
    clock: &LocalClock,
    labels: &RainLabels,
) -> Result<bool, LookupError> {
    let (date, hour) = clock.local_hour(t);
    Ok(labels.is_rain(w.lookup(date, hour)?))
}

pub fn parse_weather(text: &str, source: &str) -> Result<WeatherTable, IngestError> {
    let mut table = WeatherTable::default();
    for (lineno, line) in data_lines(text, "date") {
        let err = |message: String| IngestError::Parse {
            file: source.to_string(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err("expected date,hour,condition".into()));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| err(format!("bad date `{}`: {e}", fields[0])))?;
        let hour: u32 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad hour `{}`", fields[1])))?;
        match table.insert(date, hour, fields[2]) {
            Err(IngestError::Duplicate { key, .. }) => {
                return Err(IngestError::Duplicate {
                    file: source.to_string(),
                    key,
                })
            }
            Err(IngestError::Invalid { message, .. }) => return Err(err(message)),
            other => other?,
        }
    }
    Ok(table)
}

pub fn load_weather(path: impl AsRef<Path>) -> Result<WeatherTable, IngestError> {
    let path = path.as_ref();
    let text = read_table(path)?;
    parse_weather(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn single_row_lookup() {
        let w = parse_weather("date,hour,condition\n2023-09-01,14,Rain\n", "mem").unwrap();
        assert_eq!(w.lookup(d(2023, 9, 1), 14).unwrap(), "Rain");
        assert_eq!(w.lookup(d(2023, 9, 1), 15), Err(LookupError { date: d(2023, 9, 1), hour: 15 }));
    }

    #[test]
    fn duplicate_hour_rejected() {
        let err = parse_weather("2023-09-01,14,Rain\n2023-09-01,14,Clear\n", "mem").unwrap_err();
        assert!(matches!(err, IngestError::Duplicate { .. }));
    }

    #[test]
    fn full_day() {
        let text: String = (0..24).map(|h| format!("2023-09-01,{h},Clear\n")).collect();
        assert_eq!(parse_weather(&text, "mem").unwrap().len(), 24);
    }

    #[test]
    fn rain_labels() {
        let mut w = WeatherTable::default();
        w.insert(d(2023, 9, 1), 14, "Thunderstorm").unwrap();
        w.insert(d(2023, 9, 1), 15, "Clear").unwrap();
        w.insert(d(2023, 9, 1), 23, "Drizzle").unwrap();
        let clock = LocalClock::new(0);
        let labels = RainLabels::default();
        let base = clock.local_midnight(d(2023, 9, 1));
        assert!(rain_indicator(&w, base + 14 * 3600, &clock, &labels).unwrap());
        assert!(!rain_indicator(&w, base + 15 * 3600 + 59 * 60, &clock, &labels).unwrap());
        assert!(rain_indicator(&w, base + 16 * 3600, &clock, &labels).is_err());
    }

    #[test]
    fn late_hour_with_negative_offset() {
        let mut w = WeatherTable::default();
        w.insert(d(2023, 9, 1), 23, "Rain").unwrap();
        let clock = LocalClock::new(-4);
        // 23:30 local on 2023-09-01 is 03:30 UTC on 2023-09-02.
        let t = d(2023, 9, 2).and_hms_opt(3, 30, 0).unwrap().and_utc().timestamp();
        assert!(rain_indicator(&w, t, &clock, &RainLabels::default()).unwrap());
    }

    #[test]
    fn constant_within_hour() {
        let mut w = WeatherTable::default();
        w.insert(d(2023, 9, 1), 9, "Rain").unwrap();
        let clock = LocalClock::new(-5);
        let start = clock.local_midnight(d(2023, 9, 1)) + 9 * 3600;
        let labels = RainLabels::default();
        for s in (0..3600).step_by(7) {
            assert!(rain_indicator(&w, start + s, &clock, &labels).unwrap());
        }
    }
}
