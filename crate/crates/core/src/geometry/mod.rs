//! Route layout on the arc-length axis: projected stops and intersections,
//! links between consecutive stops, and buffer-zone classification.

mod polyline;

use std::collections::BTreeMap;

use thiserror::Error;

pub use polyline::{project_point, LatLon, LocalFrame, Polyline, Projection, EARTH_RADIUS_M};

use crate::ingest::{IntersectionSet, RouteKey, StaticNetwork};

pub const DEFAULT_BUFFER_RADIUS_M: f64 = 20.0;
/// Intersections farther than this from the shape are not on the route.
pub const OFF_ROUTE_CUTOFF_M: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("route {0} has no trips")]
    NoTrips(RouteKey),
    #[error("route {route}: stop {stop_id} projects to {arc:.1} m, not after the previous stop at {prev_arc:.1} m")]
    NonMonotoneStops {
        route: RouteKey,
        stop_id: String,
        arc: f64,
        prev_arc: f64,
    },
    #[error("route {0}: shape or stop reference missing")]
    MissingReference(RouteKey),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFeature {
    pub id: String,
    pub arc_pos: f64,
    pub offset: f64,
}

/// The road segment between consecutive stops `index - 1` and `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// 1-based; link `i` ends at projected stop `i`.
    pub index: usize,
    pub from_stop: String,
    pub to_stop: String,
    pub length: f64,
    /// Indices into `RouteModel::intersections`, in route order.
    pub intersections: Vec<usize>,
}

/// Why an intersection was left out of the route model, or a zone conflict
/// that was tolerated.
#[derive(Debug, Clone, PartialEq)]
pub enum MergeNote {
    OffRoute { id: String, offset: f64 },
    OutsideStopSpan { id: String, arc_pos: f64 },
    AbsorbedIntoStop { id: String, stop_id: String, distance: f64 },
    MergedIntoIntersection { id: String, into: String, distance: f64 },
    OverlappingStops { first: String, second: String, distance: f64 },
}

/// Buffer-zone classification of an arc position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Zone {
    /// Index into `RouteModel::stops`.
    Stop(usize),
    /// Index into `RouteModel::intersections`.
    Intersection(usize),
    OpenRoad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FeatureSlot {
    zone: Zone,
    arc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteModel {
    pub route_key: RouteKey,
    pub polyline: Polyline,
    pub stops: Vec<ProjectedFeature>,
    pub intersections: Vec<ProjectedFeature>,
    pub links: Vec<Link>,
    pub buffer_radius: f64,
    pub merge_log: Vec<MergeNote>,
    /// Stops and kept intersections sorted by arc position.
    features: Vec<FeatureSlot>,
}

impl RouteModel {
    /// Lays out a route from a polyline, its ordered stops, and candidate
    /// intersections.
    pub fn from_parts(
        route_key: RouteKey,
        polyline: Polyline,
        stops: &[(String, LatLon)],
        intersections: &IntersectionSet,
        buffer_radius: f64,
    ) -> Result<Self, GeometryError> {
        let mut projected_stops: Vec<ProjectedFeature> = Vec::with_capacity(stops.len());
        for (id, pos) in stops {
            let p = polyline.project(*pos);
            if let Some(prev) = projected_stops.last() {
                if p.arc_pos <= prev.arc_pos {
                    return Err(GeometryError::NonMonotoneStops {
                        route: route_key,
                        stop_id: id.clone(),
                        arc: p.arc_pos,
                        prev_arc: prev.arc_pos,
                    });
                }
            }
            projected_stops.push(ProjectedFeature {
                id: id.clone(),
                arc_pos: p.arc_pos,
                offset: p.offset,
            });
        }

        let mut merge_log = Vec::new();
        for w in projected_stops.windows(2) {
            let distance = w[1].arc_pos - w[0].arc_pos;
            if distance <= 2.0 * buffer_radius {
                merge_log.push(MergeNote::OverlappingStops {
                    first: w[0].id.clone(),
                    second: w[1].id.clone(),
                    distance,
                });
            }
        }

        let first = projected_stops.first().map_or(0.0, |s| s.arc_pos);
        let last = projected_stops.last().map_or(0.0, |s| s.arc_pos);
        let mut candidates: Vec<ProjectedFeature> = Vec::new();
        for x in &intersections.points {
            let p = polyline.project(x.position);
            if p.offset > OFF_ROUTE_CUTOFF_M {
                merge_log.push(MergeNote::OffRoute {
                    id: x.id.clone(),
                    offset: p.offset,
                });
                continue;
            }
            if p.arc_pos <= first || p.arc_pos >= last {
                merge_log.push(MergeNote::OutsideStopSpan {
                    id: x.id.clone(),
                    arc_pos: p.arc_pos,
                });
                continue;
            }
            candidates.push(ProjectedFeature {
                id: x.id.clone(),
                arc_pos: p.arc_pos,
                offset: p.offset,
            });
        }
        candidates.sort_by(|a, b| a.arc_pos.total_cmp(&b.arc_pos).then_with(|| a.id.cmp(&b.id)));

        // Zones closer than two radii would overlap: an intersection next to a
        // stop is absorbed by the stop, and of two adjacent intersections the
        // later one is absorbed by the earlier.
        let mut kept: Vec<ProjectedFeature> = Vec::new();
        for c in candidates {
            let k = projected_stops.partition_point(|s| s.arc_pos <= c.arc_pos);
            let nearest_stop = [k.checked_sub(1), Some(k)]
                .into_iter()
                .flatten()
                .filter_map(|i| projected_stops.get(i))
                .map(|s| (s, (s.arc_pos - c.arc_pos).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((s, d)) = nearest_stop {
                if d <= 2.0 * buffer_radius {
                    merge_log.push(MergeNote::AbsorbedIntoStop {
                        id: c.id.clone(),
                        stop_id: s.id.clone(),
                        distance: d,
                    });
                    continue;
                }
            }
            if let Some(prev) = kept.last() {
                let d = c.arc_pos - prev.arc_pos;
                if d <= 2.0 * buffer_radius {
                    merge_log.push(MergeNote::MergedIntoIntersection {
                        id: c.id.clone(),
                        into: prev.id.clone(),
                        distance: d,
                    });
                    continue;
                }
            }
            kept.push(c);
        }

        let mut links = Vec::with_capacity(projected_stops.len().saturating_sub(1));
        for i in 1..projected_stops.len() {
            let (a, b) = (&projected_stops[i - 1], &projected_stops[i]);
            links.push(Link {
                index: i,
                from_stop: a.id.clone(),
                to_stop: b.id.clone(),
                length: b.arc_pos - a.arc_pos,
                intersections: kept
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.arc_pos > a.arc_pos && x.arc_pos < b.arc_pos)
                    .map(|(j, _)| j)
                    .collect(),
            });
        }

        let mut features: Vec<FeatureSlot> = projected_stops
            .iter()
            .enumerate()
            .map(|(k, s)| FeatureSlot {
                zone: Zone::Stop(k),
                arc: s.arc_pos,
            })
            .chain(kept.iter().enumerate().map(|(j, x)| FeatureSlot {
                zone: Zone::Intersection(j),
                arc: x.arc_pos,
            }))
            .collect();
        features.sort_by(|a, b| a.arc.total_cmp(&b.arc));

        Ok(Self {
            route_key,
            polyline,
            stops: projected_stops,
            intersections: kept,
            links,
            buffer_radius,
            merge_log,
            features,
        })
    }

    /// The 1-based link, if any.
    pub fn link(&self, index: usize) -> Option<&Link> {
        index.checked_sub(1).and_then(|i| self.links.get(i))
    }

    /// Link containing `arc`, i.e. `stop[i-1] <= arc < stop[i]`.
    pub fn link_at(&self, arc: f64) -> Option<usize> {
        let k = self.stops.partition_point(|s| s.arc_pos <= arc);
        (k >= 1 && k < self.stops.len()).then_some(k)
    }

    pub fn stop_arc(&self, k: usize) -> f64 {
        self.stops[k].arc_pos
    }

    pub fn zone_arc(&self, zone: Zone) -> Option<f64> {
        match zone {
            Zone::Stop(k) => Some(self.stops[k].arc_pos),
            Zone::Intersection(j) => Some(self.intersections[j].arc_pos),
            Zone::OpenRoad => None,
        }
    }

    pub fn zone_id(&self, zone: Zone) -> Option<&str> {
        match zone {
            Zone::Stop(k) => Some(&self.stops[k].id),
            Zone::Intersection(j) => Some(&self.intersections[j].id),
            Zone::OpenRoad => None,
        }
    }

    /// All features in route order.
    pub fn features(&self) -> impl Iterator<Item = (Zone, f64)> + '_ {
        self.features.iter().map(|f| (f.zone, f.arc))
    }

    /// Features whose arc lies strictly inside `(lo, hi)`.
    pub fn features_between(&self, lo: f64, hi: f64) -> impl Iterator<Item = (Zone, f64)> + '_ {
        let start = self.features.partition_point(|f| f.arc <= lo);
        self.features[start..]
            .iter()
            .take_while(move |f| f.arc < hi)
            .map(|f| (f.zone, f.arc))
    }

    /// The feature whose buffer contains `arc` (boundary inclusive), else
    /// open road. Overlapping stop zones resolve to the nearer stop, ties to
    /// the earlier one.
    pub fn feature_zone_test(&self, arc: f64) -> Zone {
        let r = self.buffer_radius;
        let lo = self.features.partition_point(|f| f.arc < arc - r);
        let mut best: Option<(f64, Zone)> = None;
        for f in self.features[lo..].iter().take_while(|f| f.arc <= arc + r) {
            let d = (f.arc - arc).abs();
            if d <= r && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, f.zone));
            }
        }
        best.map_or(Zone::OpenRoad, |(_, z)| z)
    }
}

/// Builds the model for `route_key` from its modal stop sequence.
///
/// The representative trip is the lowest trip id among those sharing the most
/// common stop sequence; its shape is used as the polyline.
pub fn build_route_model(
    net: &StaticNetwork,
    xs: &IntersectionSet,
    route_key: &RouteKey,
    buffer_radius: f64,
) -> Result<RouteModel, GeometryError> {
    let mut counts: BTreeMap<&[String], (usize, &str)> = BTreeMap::new();
    for (trip_id, trip) in net.trips_for(route_key) {
        let e = counts.entry(trip.stop_ids.as_slice()).or_insert((0, trip_id.as_str()));
        e.0 += 1;
    }
    // BTreeMap iteration makes the tie-break (smallest sequence) deterministic.
    let (_, (_, rep_trip)) = counts
        .iter()
        .fold(None::<(&&[String], &(usize, &str))>, |best, cur| match best {
            Some(b) if b.1 .0 >= cur.1 .0 => Some(b),
            _ => Some(cur),
        })
        .ok_or_else(|| GeometryError::NoTrips(route_key.clone()))?;
    let trip = &net.trips[*rep_trip];
    let shape = net
        .shapes
        .get(&trip.shape_id)
        .ok_or_else(|| GeometryError::MissingReference(route_key.clone()))?;
    let stops = trip
        .stop_ids
        .iter()
        .map(|id| {
            net.stops
                .get(id)
                .map(|s| (id.clone(), s.position))
                .ok_or_else(|| GeometryError::MissingReference(route_key.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    RouteModel::from_parts(route_key.clone(), Polyline::new(shape), &stops, xs, buffer_radius)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::Intersection;
    use approx::assert_abs_diff_eq;

    fn frame() -> LocalFrame {
        LocalFrame::new(LatLon::new(29.65, -82.32))
    }

    /// Straight west-to-east route along y = 0 with stops and intersections
    /// at the given arc positions.
    pub(crate) fn straight_route(stop_arcs: &[f64], isec_arcs: &[f64]) -> RouteModel {
        let f = frame();
        let end = stop_arcs.last().copied().unwrap_or(0.0) + 100.0;
        let pl = Polyline::from_planar(f, vec![[-100.0, 0.0], [end - 100.0, 0.0]]);
        let stops: Vec<(String, LatLon)> = stop_arcs
            .iter()
            .enumerate()
            .map(|(k, a)| (format!("S{k}"), f.to_latlon([a - 100.0, 0.0])))
            .collect();
        let xs = IntersectionSet::new(
            isec_arcs
                .iter()
                .enumerate()
                .map(|(j, a)| Intersection {
                    id: format!("I{j}"),
                    position: f.to_latlon([a - 100.0, 5.0]),
                })
                .collect(),
        )
        .unwrap();
        RouteModel::from_parts(RouteKey::new("R", 0), pl, &stops, &xs, DEFAULT_BUFFER_RADIUS_M).unwrap()
    }

    #[test]
    fn one_link_with_intersection() {
        let rm = straight_route(&[100.0, 900.0], &[500.0]);
        assert_eq!(rm.links.len(), 1);
        assert_abs_diff_eq!(rm.links[0].length, 800.0, epsilon = 1e-6);
        assert_eq!(rm.links[0].intersections, vec![0]);
    }

    #[test]
    fn intersection_inside_stop_buffer_dropped() {
        let rm = straight_route(&[100.0, 900.0], &[890.0]);
        assert!(rm.intersections.is_empty());
        assert!(matches!(&rm.merge_log[0], MergeNote::AbsorbedIntoStop { id, .. } if id == "I0"));
    }

    #[test]
    fn three_stops_link_lengths() {
        let rm = straight_route(&[100.0, 600.0, 1300.0], &[]);
        let lengths: Vec<f64> = rm.links.iter().map(|l| l.length).collect();
        assert_abs_diff_eq!(lengths[0], 500.0, epsilon = 1e-6);
        assert_abs_diff_eq!(lengths[1], 700.0, epsilon = 1e-6);
        let total: f64 = lengths.iter().sum();
        assert_abs_diff_eq!(total, rm.stop_arc(2) - rm.stop_arc(0), epsilon = 1e-6);
    }

    #[test]
    fn off_route_intersection_excluded() {
        let f = frame();
        let pl = Polyline::from_planar(f, vec![[0.0, 0.0], [1000.0, 0.0]]);
        let stops = vec![("A".to_string(), f.to_latlon([0.0, 0.0])), ("B".to_string(), f.to_latlon([1000.0, 0.0]))];
        let xs = IntersectionSet::new(vec![Intersection {
            id: "far".into(),
            position: f.to_latlon([500.0, 45.0]),
        }])
        .unwrap();
        let rm = RouteModel::from_parts(RouteKey::new("R", 0), pl, &stops, &xs, 20.0).unwrap();
        assert!(rm.intersections.is_empty());
        assert!(matches!(rm.merge_log[0], MergeNote::OffRoute { .. }));
    }

    #[test]
    fn non_monotone_stops_rejected() {
        let f = frame();
        let pl = Polyline::from_planar(f, vec![[0.0, 0.0], [1000.0, 0.0]]);
        let stops = vec![("A".to_string(), f.to_latlon([600.0, 0.0])), ("B".to_string(), f.to_latlon([200.0, 0.0]))];
        let err = RouteModel::from_parts(RouteKey::new("R", 0), pl, &stops, &IntersectionSet::default(), 20.0).unwrap_err();
        assert!(matches!(err, GeometryError::NonMonotoneStops { .. }));
    }

    #[test]
    fn adjacent_intersections_merge() {
        let rm = straight_route(&[100.0, 900.0], &[400.0, 430.0, 600.0]);
        let ids: Vec<&str> = rm.intersections.iter().map(|x| x.id.as_str()).collect();
        assert_eq!(ids, vec!["I0", "I2"]);
    }

    #[test]
    fn zone_boundaries() {
        // Stop at 800, intersection at 400 (arc positions).
        let rm = straight_route(&[0.0, 800.0], &[400.0]);
        let (s, c) = (rm.stop_arc(1), rm.intersections[0].arc_pos);
        assert_eq!(rm.feature_zone_test(s - 15.0), Zone::Stop(1));
        assert_eq!(rm.feature_zone_test(s - 20.1), Zone::OpenRoad);
        assert_eq!(rm.feature_zone_test(c + 20.0), Zone::Intersection(0));
        assert_eq!(rm.feature_zone_test(c - 20.0), Zone::Intersection(0));
        assert_eq!(rm.feature_zone_test(c + 20.1), Zone::OpenRoad);
    }

    #[test]
    fn zone_sequence_follows_feature_order() {
        let rm = straight_route(&[100.0, 600.0, 1300.0], &[300.0, 900.0]);
        let mut tags = Vec::new();
        let mut arc = 0.0;
        while arc <= rm.polyline.total_length() {
            let z = rm.feature_zone_test(arc);
            if tags.last() != Some(&z) {
                tags.push(z);
            }
            arc += 0.5;
        }
        let features: Vec<Zone> = tags.into_iter().filter(|z| *z != Zone::OpenRoad).collect();
        let expected: Vec<Zone> = rm.features().map(|(z, _)| z).collect();
        assert_eq!(features, expected);
    }

    #[test]
    fn link_lookup() {
        let rm = straight_route(&[100.0, 600.0, 1300.0], &[]);
        assert_eq!(rm.link_at(50.0), None);
        assert_eq!(rm.link_at(rm.stop_arc(0)), Some(1));
        assert_eq!(rm.link_at(599.0), Some(1));
        assert_eq!(rm.link_at(rm.stop_arc(1)), Some(2));
        assert_eq!(rm.link_at(rm.stop_arc(2)), None);
    }
}
