use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{data_lines, read_table, IngestError};
use crate::calendar::LocalClock;
use crate::geometry::LatLon;
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct PingRecord {
    pub trip_id: String,
    pub vehicle_id: String,
    pub timestamp: Timestamp,
    pub position: LatLon,
}

/// One continuous run of pings for a (trip, vehicle), with no gap above the
/// configured maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PingSegment {
    pub trip_id: String,
    pub vehicle_id: String,
    /// Local date of the first ping.
    pub service_date: NaiveDate,
    pub pings: Vec<PingRecord>,
}

impl PingSegment {
    pub fn start(&self) -> Timestamp {
        self.pings[0].timestamp
    }

    pub fn end(&self) -> Timestamp {
        self.pings[self.pings.len() - 1].timestamp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PingOptions {
    /// Gaps strictly larger than this (seconds) start a new segment.
    pub max_gap: i64,
    pub clock: LocalClock,
}

impl Default for PingOptions {
    fn default() -> Self {
        Self {
            max_gap: 120,
            clock: LocalClock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PingSeries {
    /// Ordered by (trip_id, vehicle_id, start time).
    pub segments: Vec<PingSegment>,
}

impl PingSeries {
    pub fn records(&self) -> impl Iterator<Item = &PingRecord> {
        self.segments.iter().flat_map(|s| s.pings.iter())
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.pings.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments of `trip_id`, in time order.
    pub fn segments_for<'a>(&'a self, trip_id: &'a str) -> impl Iterator<Item = &'a PingSegment> + 'a {
        self.segments.iter().filter(move |s| s.trip_id == trip_id)
    }

    /// Groups, deduplicates and gap-splits raw records.
    pub fn from_records(records: Vec<PingRecord>, opts: &PingOptions) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<PingRecord>> = BTreeMap::new();
        for r in records {
            groups
                .entry((r.trip_id.clone(), r.vehicle_id.clone()))
                .or_default()
                .push(r);
        }
        let mut segments = Vec::new();
        for ((trip_id, vehicle_id), mut recs) in groups {
            // Stable sort keeps the first occurrence of a duplicated timestamp.
            recs.sort_by_key(|r| r.timestamp);
            recs.dedup_by_key(|r| r.timestamp);
            let mut current: Vec<PingRecord> = Vec::new();
            for r in recs {
                if let Some(last) = current.last() {
                    if r.timestamp - last.timestamp > opts.max_gap {
                        segments.push(make_segment(&trip_id, &vehicle_id, std::mem::take(&mut current), opts));
                    }
                }
                current.push(r);
            }
            if !current.is_empty() {
                segments.push(make_segment(&trip_id, &vehicle_id, current, opts));
            }
        }
        PingSeries { segments }
    }
}

fn make_segment(trip: &str, vehicle: &str, pings: Vec<PingRecord>, opts: &PingOptions) -> PingSegment {
    PingSegment {
        trip_id: trip.to_string(),
        vehicle_id: vehicle.to_string(),
        service_date: opts.clock.local_date(pings[0].timestamp),
        pings,
    }
}

fn parse_line(line: &str, lineno: u64, file: &str) -> Result<PingRecord, IngestError> {
    let err = |message: String| IngestError::Parse {
        file: file.to_string(),
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(err("empty trip_id or vehicle_id".into()));
    }
    let timestamp: i64 = fields[2]
        .parse()
        .map_err(|_| err(format!("bad timestamp `{}`", fields[2])))?;
    let lat: f64 = fields[3]
        .parse()
        .map_err(|_| err(format!("bad lat `{}`", fields[3])))?;
    let lon: f64 = fields[4]
        .parse()
        .map_err(|_| err(format!("bad lon `{}`", fields[4])))?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(err(format!("coordinate out of range ({lat}, {lon})")));
    }
    Ok(PingRecord {
        trip_id: fields[0].to_string(),
        vehicle_id: fields[1].to_string(),
        timestamp,
        position: LatLon::new(lat, lon),
    })
}

/// Parses `trip_id,vehicle_id,timestamp,lat,lon` lines. A leading header row
/// is tolerated.
pub fn parse_pings(text: &str, source: &str, opts: &PingOptions) -> Result<PingSeries, IngestError> {
    let mut records = Vec::new();
    for (lineno, line) in data_lines(text, "trip_id") {
        records.push(parse_line(line, lineno, source)?);
    }
    if records.is_empty() {
        return Err(IngestError::Empty(source.to_string()));
    }
    Ok(PingSeries::from_records(records, opts))
}

pub fn load_pings(path: impl AsRef<Path>, opts: &PingOptions) -> Result<PingSeries, IngestError> {
    let path = path.as_ref();
    let text = read_table(path)?;
    parse_pings(&text, &path.display().to_string(), opts)
}

/// Serializes in the same record format `parse_pings` reads. Coordinates are
/// written with shortest round-trip precision.
pub fn write_pings<'a>(records: impl IntoIterator<Item = &'a PingRecord>) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.trip_id, r.vehicle_id, r.timestamp, r.position.lat, r.position.lon
        );
    }
    out
}
