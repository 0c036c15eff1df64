use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{read_table, IngestError, RouteKey};
use crate::geometry::LatLon;

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub position: LatLon,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub route: RouteKey,
    pub shape_id: String,
    /// Stop ids ordered by `stop_sequence`.
    pub stop_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub short_name: String,
}

/// The subset of a GTFS static feed needed to lay out routes.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticNetwork {
    /// Distinct (route_id, direction_id) pairs served by at least one trip.
    pub routes: Vec<RouteKey>,
    pub route_info: BTreeMap<String, Route>,
    pub shapes: BTreeMap<String, Vec<LatLon>>,
    pub stops: BTreeMap<String, Stop>,
    pub trips: BTreeMap<String, Trip>,
}

impl StaticNetwork {
    pub fn trips_for<'a>(&'a self, key: &'a RouteKey) -> impl Iterator<Item = (&'a String, &'a Trip)> + 'a {
        self.trips.iter().filter(move |(_, t)| &t.route == key)
    }
}

#[derive(Deserialize)]
struct RouteRow {
    route_id: String,
    #[serde(default)]
    route_short_name: Option<String>,
}

#[derive(Deserialize)]
struct StopRow {
    stop_id: String,
    #[serde(default)]
    stop_name: Option<String>,
    stop_lat: f64,
    stop_lon: f64,
}

#[derive(Deserialize)]
struct ShapeRow {
    shape_id: String,
    shape_pt_lat: f64,
    shape_pt_lon: f64,
    shape_pt_sequence: u32,
}

#[derive(Deserialize)]
struct TripRow {
    route_id: String,
    trip_id: String,
    #[serde(default)]
    direction_id: Option<u8>,
    #[serde(default)]
    shape_id: Option<String>,
}

#[derive(Deserialize)]
struct StopTimeRow {
    trip_id: String,
    stop_id: String,
    stop_sequence: u32,
}

fn read_rows<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, IngestError> {
    let path = dir.join(name);
    let text = read_table(&path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: T = rec.map_err(|e| IngestError::Parse {
            file: name.to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads `stops.txt`, `shapes.txt`, `trips.txt`, `routes.txt` and
/// `stop_times.txt` from `dir` and checks referential integrity.
pub fn load_gtfs_static(dir: impl AsRef<Path>) -> Result<StaticNetwork, IngestError> {
    let dir = dir.as_ref();
    // Check presence up front so the first missing table is reported even if
    // an earlier one fails to parse.
    for name in ["stops.txt", "shapes.txt", "trips.txt", "routes.txt", "stop_times.txt"] {
        if !dir.join(name).is_file() {
            return Err(IngestError::MissingTable(name.to_string()));
        }
    }

    let route_info: BTreeMap<String, Route> = read_rows::<RouteRow>(dir, "routes.txt")?
        .into_iter()
        .map(|r| {
            (
                r.route_id,
                Route {
                    short_name: r.route_short_name.unwrap_or_default(),
                },
            )
        })
        .collect();

    let mut stops = BTreeMap::new();
    for row in read_rows::<StopRow>(dir, "stops.txt")? {
        let key = row.stop_id.clone();
        let stop = Stop {
            position: LatLon::new(row.stop_lat, row.stop_lon),
            name: row.stop_name.unwrap_or_default(),
        };
        if stops.insert(row.stop_id, stop).is_some() {
            return Err(IngestError::Duplicate {
                file: "stops.txt".into(),
                key,
            });
        }
    }

    let mut raw_shapes: BTreeMap<String, Vec<(u32, LatLon)>> = BTreeMap::new();
    for row in read_rows::<ShapeRow>(dir, "shapes.txt")? {
        raw_shapes
            .entry(row.shape_id)
            .or_default()
            .push((row.shape_pt_sequence, LatLon::new(row.shape_pt_lat, row.shape_pt_lon)));
    }
    let shapes: BTreeMap<String, Vec<LatLon>> = raw_shapes
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|(seq, _)| *seq);
            let mut out: Vec<LatLon> = Vec::with_capacity(pts.len());
            for (_, p) in pts {
                if out.last() != Some(&p) {
                    out.push(p);
                }
            }
            (id, out)
        })
        .collect();

    let mut trip_rows = BTreeMap::new();
    for row in read_rows::<TripRow>(dir, "trips.txt")? {
        if !route_info.contains_key(&row.route_id) {
            return Err(IngestError::Referential {
                table: "trips.txt",
                kind: "route_id",
                id: row.route_id,
            });
        }
        let shape_id = row.shape_id.filter(|s| !s.is_empty()).ok_or_else(|| {
            IngestError::Referential {
                table: "trips.txt",
                kind: "shape_id",
                id: format!("<none> (trip {})", row.trip_id),
            }
        })?;
        match shapes.get(&shape_id) {
            None => {
                return Err(IngestError::Referential {
                    table: "trips.txt",
                    kind: "shape_id",
                    id: shape_id,
                })
            }
            Some(pts) if pts.len() < 2 => {
                return Err(IngestError::Invalid {
                    what: format!("shape {shape_id}"),
                    message: "fewer than 2 distinct points".into(),
                })
            }
            Some(_) => {}
        }
        let direction = row.direction_id.unwrap_or(0);
        if direction > 1 {
            return Err(IngestError::Invalid {
                what: format!("trip {}", row.trip_id),
                message: format!("direction_id {direction} not in {{0,1}}"),
            });
        }
        let key = row.trip_id.clone();
        if trip_rows
            .insert(row.trip_id, (RouteKey::new(row.route_id, direction), shape_id))
            .is_some()
        {
            return Err(IngestError::Duplicate {
                file: "trips.txt".into(),
                key,
            });
        }
    }

    let mut seqs: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
    for row in read_rows::<StopTimeRow>(dir, "stop_times.txt")? {
        if !trip_rows.contains_key(&row.trip_id) {
            return Err(IngestError::Referential {
                table: "stop_times.txt",
                kind: "trip_id",
                id: row.trip_id,
            });
        }
        if !stops.contains_key(&row.stop_id) {
            return Err(IngestError::Referential {
                table: "stop_times.txt",
                kind: "stop_id",
                id: row.stop_id,
            });
        }
        seqs.entry(row.trip_id)
            .or_default()
            .push((row.stop_sequence, row.stop_id));
    }

    let mut trips = BTreeMap::new();
    let mut routes = BTreeSet::new();
    for (trip_id, (route, shape_id)) in trip_rows {
        let mut seq = seqs.remove(&trip_id).unwrap_or_default();
        seq.sort_by_key(|(s, _)| *s);
        if seq.len() < 2 {
            return Err(IngestError::Invalid {
                what: format!("trip {trip_id}"),
                message: format!("{} stop(s); at least 2 required", seq.len()),
            });
        }
        routes.insert(route.clone());
        trips.insert(
            trip_id,
            Trip {
                route,
                shape_id,
                stop_ids: seq.into_iter().map(|(_, s)| s).collect(),
            },
        );
    }

    Ok(StaticNetwork {
        routes: routes.into_iter().collect(),
        route_info,
        shapes,
        stops,
        trips,
    })
}
