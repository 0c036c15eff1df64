//! Buffer-zone events from projected ping streams, link travel-time
//! decomposition, open-road speeds and covariates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::LocalClock;
use crate::geometry::{RouteModel, Zone};
use crate::ingest::{
    rain_indicator, read_table, IngestError, LookupError, PingRecord, PingSegment, PingSeries, RainLabels, RouteKey,
    StaticNetwork, WeatherTable,
};
use crate::linalg::DesignRow;
use crate::Timestamp;

/// Pings that move backward by more than this are treated as GPS noise and dropped.
pub const BACKWARD_TOLERANCE_M: f64 = 5.0;
pub const DEFAULT_SPEED_THRESHOLD: f64 = 5.0;
pub const DEFAULT_PEAK_HOURS: [u32; 4] = [7, 8, 16, 17];
/// Pings farther than this from the shape are ignored.
pub const DEFAULT_MAX_PING_OFFSET_M: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("too sparse: {interpolated} of {total} features interpolated")]
    TooSparse { interpolated: usize, total: usize },
    #[error("link {link_index}: non-positive road time {road} s")]
    NonpositiveRoadTime { link_index: usize, road: i64 },
    #[error(transparent)]
    Weather(#[from] LookupError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPing {
    pub timestamp: Timestamp,
    pub arc_pos: f64,
    pub offset: f64,
}

pub fn project_pings(rm: &RouteModel, pings: &[PingRecord]) -> Vec<ProjectedPing> {
    pings
        .iter()
        .map(|p| {
            let pr = rm.polyline.project(p.position);
            ProjectedPing {
                timestamp: p.timestamp,
                arc_pos: pr.arc_pos,
                offset: pr.offset,
            }
        })
        .collect()
}

/// Drops pings that regress more than [`BACKWARD_TOLERANCE_M`] behind the
/// furthest position so far and clamps smaller regressions to it, leaving
/// non-decreasing arc positions.
pub fn repair_monotone(pings: &[ProjectedPing]) -> Vec<ProjectedPing> {
    let mut out = Vec::with_capacity(pings.len());
    let mut furthest = f64::NEG_INFINITY;
    for p in pings {
        if p.arc_pos < furthest - BACKWARD_TOLERANCE_M {
            continue;
        }
        furthest = furthest.max(p.arc_pos);
        out.push(ProjectedPing { arc_pos: furthest, ..*p });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEvent {
    pub zone: Zone,
    pub feature_id: String,
    pub t_arrival: Timestamp,
    pub t_departure: Timestamp,
    /// Jumped between pings; arrival = departure, linear in arc position.
    pub interpolated: bool,
    /// The stream began inside the zone, so the arrival is an upper bound.
    pub truncated: bool,
}

/// Buffer-zone events for one traversal, in route order.
///
/// Pings are repaired for backward motion first. A feature whose zone still
/// holds the final ping produces no event.
pub fn detect_events(rm: &RouteModel, pings: &[ProjectedPing]) -> Result<Vec<FeatureEvent>, InferenceError> {
    let pings = repair_monotone(pings);
    let (Some(first), Some(last)) = (pings.first(), pings.last()) else {
        return Ok(Vec::new());
    };
    let mut seen = BTreeSet::new();
    let mut events = Vec::new();
    let mut open: Option<(Zone, Timestamp, bool)> = None;
    for (k, p) in pings.iter().enumerate() {
        let zone = rm.feature_zone_test(p.arc_pos);
        if let Some((oz, ta, truncated)) = open {
            if oz != zone {
                events.push(FeatureEvent {
                    zone: oz,
                    feature_id: rm.zone_id(oz).unwrap_or_default().to_string(),
                    t_arrival: ta,
                    t_departure: p.timestamp,
                    interpolated: false,
                    truncated,
                });
                open = None;
            }
        }
        if zone != Zone::OpenRoad && open.is_none() && seen.insert(zone) {
            open = Some((zone, p.timestamp, k == 0));
        }
    }
    for (zone, arc) in rm.features() {
        if arc <= first.arc_pos || arc >= last.arc_pos || seen.contains(&zone) {
            continue;
        }
        let k = pings.partition_point(|p| p.arc_pos < arc);
        let (a, b) = (pings[k - 1], pings[k]);
        let frac = (arc - a.arc_pos) / (b.arc_pos - a.arc_pos);
        let t = a.timestamp + (frac * (b.timestamp - a.timestamp) as f64).round() as i64;
        events.push(FeatureEvent {
            zone,
            feature_id: rm.zone_id(zone).unwrap_or_default().to_string(),
            t_arrival: t,
            t_departure: t,
            interpolated: true,
            truncated: false,
        });
    }
    events.sort_by(|x, y| {
        let ax = rm.zone_arc(x.zone).unwrap_or(0.0);
        let ay = rm.zone_arc(y.zone).unwrap_or(0.0);
        ax.total_cmp(&ay).then(x.zone.cmp(&y.zone))
    });
    // An interpolated crossing cannot precede the departure from the
    // feature before it, which is stamped at a later ping.
    let mut last_departure = Timestamp::MIN;
    for e in &mut events {
        if e.interpolated && e.t_arrival < last_departure {
            e.t_arrival = last_departure;
            e.t_departure = last_departure;
        }
        last_departure = last_departure.max(e.t_departure);
    }
    let interpolated = events.iter().filter(|e| e.interpolated).count();
    if interpolated * 2 > events.len() {
        return Err(InferenceError::TooSparse {
            interpolated,
            total: events.len(),
        });
    }
    Ok(events)
}

/// Time components of one link traversal; the identity
/// `total = road + dwell + Σ intersection` holds exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkTimes {
    pub depart_prev: Timestamp,
    pub total: i64,
    pub dwell: i64,
    pub road: i64,
    pub intersection_times: Vec<(String, i64)>,
    pub interpolated: bool,
}

/// Splits link `link_index` into road, dwell and intersection time from the
/// events of its intersections and end stop.
pub fn decompose_link(
    link_index: usize,
    prev_stop_departure: Timestamp,
    intersections: &[&FeatureEvent],
    stop: &FeatureEvent,
) -> Result<LinkTimes, InferenceError> {
    let intersection_times: Vec<(String, i64)> = intersections
        .iter()
        .map(|e| (e.feature_id.clone(), e.t_departure - e.t_arrival))
        .collect();
    let signal: i64 = intersection_times.iter().map(|(_, s)| s).sum();
    let road = stop.t_arrival - prev_stop_departure - signal;
    if road <= 0 {
        return Err(InferenceError::NonpositiveRoadTime { link_index, road });
    }
    Ok(LinkTimes {
        depart_prev: prev_stop_departure,
        total: stop.t_departure - prev_stop_departure,
        dwell: stop.t_departure - stop.t_arrival,
        road,
        intersection_times,
        interpolated: stop.interpolated || intersections.iter().any(|e| e.interpolated),
    })
}

pub fn space_mean_speed(prev: &ProjectedPing, curr: &ProjectedPing) -> f64 {
    (curr.arc_pos - prev.arc_pos) / (curr.timestamp - prev.timestamp) as f64
}

/// Speeds between consecutive pings that are both on open road on link
/// `link_index` with no feature between them.
pub fn open_road_speeds(rm: &RouteModel, pings: &[ProjectedPing], link_index: usize) -> Vec<f64> {
    let on_open_link = |p: &ProjectedPing| {
        rm.feature_zone_test(p.arc_pos) == Zone::OpenRoad && rm.link_at(p.arc_pos) == Some(link_index)
    };
    pings
        .windows(2)
        .filter(|w| {
            w[1].timestamp > w[0].timestamp
                && on_open_link(&w[0])
                && on_open_link(&w[1])
                && rm.features_between(w[0].arc_pos, w[1].arc_pos).next().is_none()
        })
        .map(|w| space_mean_speed(&w[0], &w[1]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficIndicator {
    pub value: bool,
    /// False when no open-road speed was available; `value` is then 0.
    pub observed: bool,
}

pub fn traffic_indicator(speeds: &[f64], threshold: f64) -> TrafficIndicator {
    TrafficIndicator {
        value: speeds.iter().any(|&v| v < threshold),
        observed: !speeds.is_empty(),
    }
}

/// Binary covariates x1..x4 of the road-time model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CovariateVector {
    pub rain: bool,
    pub peak: bool,
    pub weekday: bool,
    pub traffic: bool,
}

impl CovariateVector {
    pub fn new(rain: bool, peak: bool, weekday: bool, traffic: bool) -> Self {
        Self {
            rain,
            peak,
            weekday,
            traffic,
        }
    }

    pub fn from_bits(bits: [u8; 4]) -> Self {
        Self::new(bits[0] != 0, bits[1] != 0, bits[2] != 0, bits[3] != 0)
    }

    pub fn bits(&self) -> [u8; 4] {
        [self.rain, self.peak, self.weekday, self.traffic].map(u8::from)
    }

    /// `[1, x1, x2, x3, x4]`.
    pub fn design_row(&self) -> DesignRow {
        let b = self.bits();
        [1.0, b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64]
    }

    /// All sixteen combinations in lexicographic bit order.
    pub fn all() -> impl Iterator<Item = CovariateVector> {
        (0u8..16).map(|m| Self::from_bits([(m >> 3) & 1, (m >> 2) & 1, (m >> 1) & 1, m & 1]))
    }
}

impl fmt::Display for CovariateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.bits();
        write!(f, "[{},{},{},{}]", b[0], b[1], b[2], b[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateConfig {
    pub clock: LocalClock,
    pub peak_hours: BTreeSet<u32>,
    pub rain_labels: RainLabels,
    pub speed_threshold: f64,
    /// Per-link overrides of `speed_threshold`, keyed by link index.
    pub link_thresholds: BTreeMap<usize, f64>,
    pub max_ping_offset: f64,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self {
            clock: LocalClock::default(),
            peak_hours: DEFAULT_PEAK_HOURS.into_iter().collect(),
            rain_labels: RainLabels::default(),
            speed_threshold: DEFAULT_SPEED_THRESHOLD,
            link_thresholds: BTreeMap::new(),
            max_ping_offset: DEFAULT_MAX_PING_OFFSET_M,
        }
    }
}

impl CovariateConfig {
    pub fn threshold_for(&self, link_index: usize) -> f64 {
        self.link_thresholds
            .get(&link_index)
            .copied()
            .unwrap_or(self.speed_threshold)
    }
}

pub fn build_covariates(
    t: Timestamp,
    weather: &WeatherTable,
    traffic: bool,
    cfg: &CovariateConfig,
) -> Result<CovariateVector, LookupError> {
    let (_, hour) = cfg.clock.local_hour(t);
    Ok(CovariateVector {
        rain: rain_indicator(weather, t, &cfg.clock, &cfg.rain_labels)?,
        peak: cfg.peak_hours.contains(&hour),
        weekday: cfg.clock.is_weekday(t),
        traffic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObservationFlags {
    pub interpolated: bool,
    pub traffic_unobserved: bool,
}

impl fmt::Display for ObservationFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.interpolated {
            parts.push("interpolated");
        }
        if self.traffic_unobserved {
            parts.push("traffic_unobserved");
        }
        f.write_str(&parts.join("|"))
    }
}

/// One traversal of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkObservation {
    pub route_key: RouteKey,
    pub trip_id: String,
    pub link_index: usize,
    pub depart_prev: Timestamp,
    pub total: i64,
    pub dwell: i64,
    pub road: i64,
    pub intersection_times: Vec<(String, i64)>,
    pub covariates: CovariateVector,
    pub flags: ObservationFlags,
}

impl LinkObservation {
    pub fn identity_holds(&self) -> bool {
        self.total == self.road + self.dwell + self.intersection_times.iter().map(|(_, s)| s).sum::<i64>()
    }

    pub fn log_road(&self) -> f64 {
        (self.road as f64).ln()
    }
}

/// A link traversal that produced no observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub trip_id: String,
    pub link_index: Option<usize>,
    pub reason: InferenceError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InferenceReport {
    pub observations: Vec<LinkObservation>,
    pub discarded: Vec<Discard>,
}

/// Link observations from one ping segment of one trip.
pub fn infer_traversal(
    rm: &RouteModel,
    segment: &PingSegment,
    weather: &WeatherTable,
    cfg: &CovariateConfig,
) -> InferenceReport {
    let mut report = InferenceReport::default();
    let projected: Vec<ProjectedPing> = project_pings(rm, &segment.pings)
        .into_iter()
        .filter(|p| p.offset <= cfg.max_ping_offset)
        .collect();
    let pings = repair_monotone(&projected);
    let events = match detect_events(rm, &pings) {
        Ok(e) => e,
        Err(reason) => {
            report.discarded.push(Discard {
                trip_id: segment.trip_id.clone(),
                link_index: None,
                reason,
            });
            return report;
        }
    };
    let by_zone: BTreeMap<Zone, &FeatureEvent> = events.iter().map(|e| (e.zone, e)).collect();
    for link in &rm.links {
        let i = link.index;
        let (Some(prev), Some(stop)) = (by_zone.get(&Zone::Stop(i - 1)), by_zone.get(&Zone::Stop(i))) else {
            continue;
        };
        let Some(isecs) = link
            .intersections
            .iter()
            .map(|&j| by_zone.get(&Zone::Intersection(j)).copied())
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let discard = |reason| Discard {
            trip_id: segment.trip_id.clone(),
            link_index: Some(i),
            reason,
        };
        let times = match decompose_link(i, prev.t_departure, &isecs, stop) {
            Ok(t) => t,
            Err(e) => {
                report.discarded.push(discard(e));
                continue;
            }
        };
        let traffic = traffic_indicator(&open_road_speeds(rm, &pings, i), cfg.threshold_for(i));
        let covariates = match build_covariates(times.depart_prev, weather, traffic.value, cfg) {
            Ok(c) => c,
            Err(e) => {
                report.discarded.push(discard(e.into()));
                continue;
            }
        };
        report.observations.push(LinkObservation {
            route_key: rm.route_key.clone(),
            trip_id: segment.trip_id.clone(),
            link_index: i,
            depart_prev: times.depart_prev,
            total: times.total,
            dwell: times.dwell,
            road: times.road,
            intersection_times: times.intersection_times,
            covariates,
            flags: ObservationFlags {
                interpolated: times.interpolated,
                traffic_unobserved: !traffic.observed,
            },
        });
    }
    report
}

/// Observations for every ping segment whose trip runs `rm`'s route with the
/// model's stop sequence. Trips on other stop patterns are skipped.
pub fn infer_route(
    net: &StaticNetwork,
    rm: &RouteModel,
    pings: &PingSeries,
    weather: &WeatherTable,
    cfg: &CovariateConfig,
) -> InferenceReport {
    let stop_ids: Vec<&str> = rm.stops.iter().map(|s| s.id.as_str()).collect();
    let mut report = InferenceReport::default();
    for seg in &pings.segments {
        let Some(trip) = net.trips.get(&seg.trip_id) else {
            continue;
        };
        if trip.route != rm.route_key || !trip.stop_ids.iter().map(String::as_str).eq(stop_ids.iter().copied()) {
            continue;
        }
        let r = infer_traversal(rm, seg, weather, cfg);
        report.observations.extend(r.observations);
        report.discarded.extend(r.discarded);
    }
    report.observations.sort_by(|a, b| {
        (a.link_index, a.depart_prev, &a.trip_id).cmp(&(b.link_index, b.depart_prev, &b.trip_id))
    });
    report
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    route_id: String,
    direction_id: u8,
    trip_id: String,
    link_index: usize,
    depart_prev: i64,
    total: i64,
    dwell: i64,
    road: i64,
    intersection_times: String,
    rain: u8,
    peak: u8,
    weekday: u8,
    traffic: u8,
    flags: String,
}

pub fn write_observations(obs: &[LinkObservation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in obs {
        let b = o.covariates.bits();
        w.serialize(ObservationRecord {
            route_id: o.route_key.route_id.clone(),
            direction_id: o.route_key.direction_id,
            trip_id: o.trip_id.clone(),
            link_index: o.link_index,
            depart_prev: o.depart_prev,
            total: o.total,
            dwell: o.dwell,
            road: o.road,
            intersection_times: o
                .intersection_times
                .iter()
                .map(|(id, s)| format!("{id}={s}"))
                .collect::<Vec<_>>()
                .join(";"),
            rain: b[0],
            peak: b[1],
            weekday: b[2],
            traffic: b[3],
            flags: o.flags.to_string(),
        })
        .expect("writing to memory");
    }
    if obs.is_empty() {
        return "route_id,direction_id,trip_id,link_index,depart_prev,total,dwell,road,intersection_times,rain,peak,weekday,traffic,flags\n".into();
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

pub fn parse_observations(text: &str, source: &str) -> Result<Vec<LinkObservation>, IngestError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.deserialize::<ObservationRecord>().enumerate() {
        let line = k as u64 + 2;
        let err = |message: String| IngestError::Parse {
            file: source.to_string(),
            line,
            message,
        };
        let r = rec.map_err(|e| err(e.to_string()))?;
        let mut intersection_times = Vec::new();
        for part in r.intersection_times.split(';').filter(|p| !p.is_empty()) {
            let (id, secs) = part
                .split_once('=')
                .ok_or_else(|| err(format!("bad intersection entry `{part}`")))?;
            let secs = secs
                .parse::<i64>()
                .map_err(|_| err(format!("bad intersection seconds `{secs}`")))?;
            intersection_times.push((id.to_string(), secs));
        }
        let mut flags = ObservationFlags::default();
        for f in r.flags.split('|').filter(|f| !f.is_empty()) {
            match f {
                "interpolated" => flags.interpolated = true,
                "traffic_unobserved" => flags.traffic_unobserved = true,
                other => return Err(err(format!("unknown flag `{other}`"))),
            }
        }
        let bits = [r.rain, r.peak, r.weekday, r.traffic];
        if bits.iter().any(|&b| b > 1) {
            return Err(err("covariates must be 0 or 1".into()));
        }
        let o = LinkObservation {
            route_key: RouteKey::new(r.route_id, r.direction_id),
            trip_id: r.trip_id,
            link_index: r.link_index,
            depart_prev: r.depart_prev,
            total: r.total,
            dwell: r.dwell,
            road: r.road,
            intersection_times,
            covariates: CovariateVector::from_bits(bits),
            flags,
        };
        if !o.identity_holds() {
            return Err(err("total != road + dwell + intersection times".into()));
        }
        if o.road <= 0 || o.dwell < 0 {
            return Err(err("road time must be positive and dwell non-negative".into()));
        }
        out.push(o);
    }
    Ok(out)
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<LinkObservation>, IngestError> {
    let path = path.as_ref();
    parse_observations(&read_table(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests::straight_route;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn pp(t: i64, arc: f64) -> ProjectedPing {
        ProjectedPing {
            timestamp: t,
            arc_pos: arc,
            offset: 0.0,
        }
    }

    fn ev(zone: Zone, id: &str, ta: i64, td: i64) -> FeatureEvent {
        FeatureEvent {
            zone,
            feature_id: id.into(),
            t_arrival: ta,
            t_departure: td,
            interpolated: ta == td,
            truncated: false,
        }
    }

    #[test]
    fn stop_entry_and_exit() {
        let rm = straight_route(&[0.0, 800.0, 1600.0], &[]);
        let pings = [pp(0, 770.0), pp(10, 790.0), pp(20, 805.0), pp(30, 825.0)];
        let events = detect_events(&rm, &pings).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].t_arrival, events[0].t_departure), (10, 30));
        assert_eq!(events[0].zone, Zone::Stop(1));
        assert!(!events[0].interpolated);
    }

    #[test]
    fn jumped_stop_is_interpolated() {
        let rm = straight_route(&[0.0, 800.0, 1600.0], &[]);
        let err = detect_events(&rm, &[pp(0, 700.0), pp(20, 900.0)]).unwrap_err();
        // A single jumped feature is 100% interpolated.
        assert_eq!(err, InferenceError::TooSparse { interpolated: 1, total: 1 });
        let pings = [pp(0, 700.0), pp(20, 900.0), pp(40, 1590.0), pp(50, 1630.0)];
        let events = detect_events(&rm, &pings).unwrap();
        assert_eq!(events[0].zone, Zone::Stop(1));
        assert!(events[0].interpolated);
        assert_eq!((events[0].t_arrival, events[0].t_departure), (10, 10));
        assert_eq!((events[1].t_arrival, events[1].t_departure), (40, 50));
    }

    #[test]
    fn dwell_with_jitter() {
        let rm = straight_route(&[0.0, 800.0, 1600.0], &[]);
        let pings = [pp(0, 700.0), pp(5, 790.0), pp(10, 795.0), pp(15, 792.0), pp(20, 825.0)];
        let events = detect_events(&rm, &pings).unwrap();
        assert_eq!((events[0].t_arrival, events[0].t_departure), (5, 20));
    }

    #[test]
    fn large_regression_dropped() {
        let r = repair_monotone(&[pp(0, 100.0), pp(1, 90.0), pp(2, 97.0), pp(3, 120.0)]);
        let arcs: Vec<f64> = r.iter().map(|p| p.arc_pos).collect();
        assert_eq!(arcs, vec![100.0, 100.0, 120.0]);
        assert_eq!(r[1].timestamp, 2);
    }

    #[test]
    fn decomposition_arithmetic() {
        let isec = ev(Zone::Intersection(0), "I0", 120, 135);
        let stop = ev(Zone::Stop(1), "S1", 150, 160);
        let t = decompose_link(1, 100, &[&isec], &stop).unwrap();
        assert_eq!((t.total, t.road, t.dwell), (60, 35, 10));
        assert_eq!(t.intersection_times, vec![("I0".to_string(), 15)]);
        assert_eq!(t.road + t.dwell + 15, t.total);
    }

    #[test]
    fn skipped_stop_has_zero_dwell() {
        let stop = ev(Zone::Stop(1), "S1", 40, 40);
        let t = decompose_link(1, 0, &[], &stop).unwrap();
        assert_eq!((t.road, t.dwell, t.total), (40, 0, 40));
    }

    #[test]
    fn interpolated_intersection_kept_in_identity() {
        let isec = ev(Zone::Intersection(0), "I0", 125, 125);
        let stop = ev(Zone::Stop(1), "S1", 150, 160);
        let t = decompose_link(1, 100, &[&isec], &stop).unwrap();
        assert_eq!(t.intersection_times[0].1, 0);
        assert_eq!(t.road, 50);
        assert!(t.interpolated);
    }

    #[test]
    fn nonpositive_road_rejected() {
        let isec = ev(Zone::Intersection(0), "I0", 100, 150);
        let stop = ev(Zone::Stop(1), "S1", 150, 160);
        assert_eq!(
            decompose_link(1, 100, &[&isec], &stop),
            Err(InferenceError::NonpositiveRoadTime { link_index: 1, road: 0 })
        );
    }

    #[test]
    fn speeds() {
        assert_eq!(space_mean_speed(&pp(0, 0.0), &pp(20, 150.0)), 7.5);
        assert_eq!(space_mean_speed(&pp(0, 10.0), &pp(15, 10.0)), 0.0);
        assert!((space_mean_speed(&pp(0, 0.0), &pp(15, 100.0)) - 6.666666666666667).abs() < 1e-9);
    }

    #[test]
    fn open_road_pairs_exclude_buffers_and_crossings() {
        let rm = straight_route(&[0.0, 500.0, 1000.0], &[250.0]);
        let pings = [
            pp(0, 100.0),
            pp(10, 200.0), // open, open: counted
            pp(20, 240.0), // in intersection zone
            pp(30, 300.0),
            pp(40, 400.0), // open, open: counted
            pp(50, 600.0), // crosses stop 1
        ];
        let v = open_road_speeds(&rm, &pings, 1);
        assert_eq!(v, vec![10.0, 10.0]);
    }

    #[test]
    fn traffic_rules() {
        assert!(traffic_indicator(&[7.5, 2.0, 8.0], 5.0).value);
        assert!(!traffic_indicator(&[7.5, 8.0], 5.0).value);
        assert_eq!(
            traffic_indicator(&[], 5.0),
            TrafficIndicator {
                value: false,
                observed: false
            }
        );
    }

    fn weather(date: NaiveDate, hour: u32, cond: &str) -> WeatherTable {
        let mut w = WeatherTable::default();
        w.insert(date, hour, cond).unwrap();
        w
    }

    fn local_ts(clock: &LocalClock, date: NaiveDate, h: i64, m: i64) -> Timestamp {
        clock.local_midnight(date) + h * 3600 + m * 60
    }

    #[test]
    fn covariates_from_calendar() {
        let cfg = CovariateConfig::default();
        let tue = NaiveDate::from_ymd_opt(2024, 3, 5).unwrap();
        let t = local_ts(&cfg.clock, tue, 8, 30);
        let c = build_covariates(t, &weather(tue, 8, "Clear"), false, &cfg).unwrap();
        assert_eq!(c.bits(), [0, 1, 1, 0]);

        let sat = NaiveDate::from_ymd_opt(2024, 3, 9).unwrap();
        let t = local_ts(&cfg.clock, sat, 12, 0);
        let c = build_covariates(t, &weather(sat, 12, "Rain"), true, &cfg).unwrap();
        assert_eq!(c.bits(), [1, 0, 0, 1]);

        let fri = NaiveDate::from_ymd_opt(2024, 3, 8).unwrap();
        let t = local_ts(&cfg.clock, fri, 16, 0);
        let c = build_covariates(t, &weather(fri, 16, "Clear"), false, &cfg).unwrap();
        assert!(c.peak);

        assert!(build_covariates(t, &WeatherTable::default(), false, &cfg).is_err());
    }

    #[test]
    fn observation_file_roundtrip() {
        let obs = vec![LinkObservation {
            route_key: RouteKey::new("12", 1),
            trip_id: "T,1".into(),
            link_index: 3,
            depart_prev: 1_700_000_000,
            total: 60,
            dwell: 10,
            road: 35,
            intersection_times: vec![("I1".into(), 15), ("I2".into(), 0)],
            covariates: CovariateVector::from_bits([0, 1, 1, 0]),
            flags: ObservationFlags {
                interpolated: true,
                traffic_unobserved: false,
            },
        }];
        let text = write_observations(&obs);
        assert!(text.starts_with("route_id,direction_id,trip_id,link_index"));
        assert_eq!(parse_observations(&text, "mem").unwrap(), obs);
    }

    #[test]
    fn observation_identity_checked_on_parse() {
        let text = "route_id,direction_id,trip_id,link_index,depart_prev,total,dwell,road,intersection_times,rain,peak,weekday,traffic,flags\n\
                    R,0,T1,1,0,61,10,35,I=15,0,0,0,0,\n";
        assert!(matches!(parse_observations(text, "mem"), Err(IngestError::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn events_monotone_and_identity_exact(
            steps in prop::collection::vec((1i64..6, 0.0f64..40.0), 20..400)
        ) {
            let rm = straight_route(&[50.0, 400.0, 900.0, 1300.0], &[200.0, 650.0, 700.0]);
            let mut t = 0;
            let mut arc = 0.0;
            let mut pings = vec![pp(0, 0.0)];
            for (dt, da) in steps {
                t += dt;
                arc += da;
                pings.push(pp(t, arc));
            }
            if let Ok(events) = detect_events(&rm, &pings) {
                for w in events.windows(2) {
                    prop_assert!(w[0].t_departure <= w[1].t_arrival);
                    prop_assert!(w[0].t_arrival <= w[0].t_departure);
                }
                let by_zone: BTreeMap<Zone, &FeatureEvent> = events.iter().map(|e| (e.zone, e)).collect();
                for link in &rm.links {
                    let i = link.index;
                    let (Some(a), Some(b)) = (by_zone.get(&Zone::Stop(i - 1)), by_zone.get(&Zone::Stop(i))) else { continue };
                    let isecs: Option<Vec<&FeatureEvent>> =
                        link.intersections.iter().map(|&j| by_zone.get(&Zone::Intersection(j)).copied()).collect();
                    if let Some(isecs) = isecs {
                        if let Ok(times) = decompose_link(i, a.t_departure, &isecs, b) {
                            let s: i64 = times.intersection_times.iter().map(|x| x.1).sum();
                            prop_assert_eq!(times.total, times.road + times.dwell + s);
                        }
                    }
                }
            }
        }

        #[test]
        fn extra_open_road_pings_do_not_change_events(
            seed_arcs in prop::collection::vec(0.0f64..1.0, 1..10)
        ) {
            let rm = straight_route(&[0.0, 500.0, 1000.0], &[]);
            // Constant 10 m/s with a ping every 10 s.
            let base: Vec<ProjectedPing> = (0..=110).step_by(10).map(|t| pp(t, 10.0 * t as f64)).collect();
            let mut extra = base.clone();
            for u in seed_arcs {
                // Strictly between the first and last open-road pings of link 1.
                let t = 11 + (u * 29.0).floor() as i64;
                if !extra.iter().any(|p| p.timestamp == t) {
                    extra.push(pp(t, 10.0 * t as f64));
                }
            }
            extra.sort_by_key(|p| p.timestamp);
            let a = detect_events(&rm, &base);
            let b = detect_events(&rm, &extra);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn traffic_monotone_in_threshold(
            speeds in prop::collection::vec(0.0f64..20.0, 0..10),
            v in 0.0f64..20.0, dv in 0.0f64..5.0
        ) {
            if traffic_indicator(&speeds, v).value {
                prop_assert!(traffic_indicator(&speeds, v + dv).value);
            }
        }
    }
}
