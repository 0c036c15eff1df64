//! Loaders for GTFS static tables, normalized vehicle-position records,
//! hourly weather and intersection lists.
//!
//! Everything returned here is validated on construction and immutable
//! afterwards.

mod gtfs;
mod intersections;
mod pings;
mod weather;

use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

pub use gtfs::{load_gtfs_static, Route, StaticNetwork, Stop, Trip};
pub use intersections::{load_intersections, Intersection, IntersectionSet};
pub use pings::{load_pings, parse_pings, write_pings, PingOptions, PingRecord, PingSegment, PingSeries};
pub use weather::{load_weather, parse_weather, rain_indicator, RainLabels, WeatherTable};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing table {0}")]
    MissingTable(String),
    #[error("referential: {table} references missing {kind} `{id}`")]
    Referential {
        table: &'static str,
        kind: &'static str,
        id: String,
    },
    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("empty input {0}")]
    Empty(String),
    #[error("duplicate entry in {file}: {key}")]
    Duplicate { file: String, key: String },
    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A weather lookup for an hour that has no entry.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no weather entry for {date} hour {hour}")]
pub struct LookupError {
    pub date: NaiveDate,
    pub hour: u32,
}

/// A directed route: GTFS `route_id` plus `direction_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouteKey {
    pub route_id: String,
    pub direction_id: u8,
}

impl RouteKey {
    pub fn new(route_id: impl Into<String>, direction_id: u8) -> Self {
        Self {
            route_id: route_id.into(),
            direction_id,
        }
    }
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.route_id, self.direction_id)
    }
}

/// Reads a whole file, mapping a missing file to `MissingTable`.
pub(crate) fn read_table(path: &Path) -> Result<String, IngestError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(IngestError::MissingTable(path.display().to_string()))
        }
        Err(e) => Err(IngestError::io(path, e)),
    }
}

/// Splits text into (1-based line number, trimmed line), skipping blanks and
/// an optional header whose first field equals `header_first`.
pub(crate) fn data_lines<'a>(
    text: &'a str,
    header_first: &'a str,
) -> impl Iterator<Item = (u64, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .enumerate()
        .filter(move |(k, (_, l))| {
            !(*k == 0 && l.split(',').next().map(str::trim) == Some(header_first))
        })
        .map(|(_, x)| x)
}
