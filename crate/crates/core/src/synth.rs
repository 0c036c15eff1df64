//! Synthetic corpus with known ground truth.
//!
//! A fixture route is laid out on a local plane, and buses are driven along
//! it according to per-link truth parameters:
//!
//! - Road time on open road is log-normal with the link's β and γ.
//! - A traffic-affected traversal stands still for part of that time at one
//!   point. Otherwise it moves at a constant speed kept above the threshold V.
//! - Time in each intersection zone is log-normal.
//! - Dwell is drawn from a per-stop set.
//!
//! Pings are sampled from the resulting motion at a fixed interval. The
//! output is a GTFS feed, ping, weather and intersection files, and the true
//! event times for checking the pipeline end to end.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::calendar::LocalClock;
use crate::geometry::{LatLon, LocalFrame, Polyline, DEFAULT_BUFFER_RADIUS_M};
use crate::inference::{CovariateConfig, CovariateVector};
use crate::ingest::{Intersection, IntersectionSet, PingRecord, RouteKey, WeatherTable};
use crate::linalg::DESIGN_DIM;
use crate::Timestamp;

/// Shape length before the first stop and after the last.
const START_PAD_M: f64 = 60.0;
const END_PAD_M: f64 = 150.0;
/// Speed after leaving the last stop.
const EXIT_SPEED: f64 = 10.0;
/// Free-flow speed must exceed the threshold by this factor.
const SPEED_MARGIN: f64 = 1.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("infeasible truth: {0}")]
    Infeasible(String),
    #[error("truth file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTruth {
    pub length: f64,
    /// Intersection positions as fractions of the link length.
    pub intersection_fracs: Vec<f64>,
    pub beta: [f64; DESIGN_DIM],
    pub gamma: [f64; DESIGN_DIM],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionTruth {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub route_id: String,
    pub anchor: LatLon,
    pub links: Vec<LinkTruth>,
    /// Dwell values per stop, for stops 1..=links (bootstrap draws).
    pub dwell_sets: Vec<Vec<f64>>,
    /// One per intersection, in route order.
    pub intersections: Vec<IntersectionTruth>,
    /// Seconds spent leaving the first stop's zone.
    pub layover: f64,
    pub start_date: NaiveDate,
    pub days: usize,
    pub service_hours: (u32, u32),
    /// Minutes past each service hour at which a trip starts.
    pub departure_minutes: Vec<u32>,
    pub rain_probability: f64,
    pub traffic_probability: f64,
    /// Share of road time spent standing in a traffic-affected traversal.
    pub jam_fraction: f64,
    pub ping_interval: i64,
    pub speed_threshold: f64,
    pub delta_t: f64,
    pub buffer_radius: f64,
    pub clock: LocalClock,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let link = |length: f64, fracs: &[f64], speed: f64, beta_rest: [f64; 4], gamma: [f64; 5]| {
            let open = length - 2.0 * DEFAULT_BUFFER_RADIUS_M * (1.0 + fracs.len() as f64);
            LinkTruth {
                length,
                intersection_fracs: fracs.to_vec(),
                beta: [(open / speed).ln(), beta_rest[0], beta_rest[1], beta_rest[2], beta_rest[3]],
                gamma,
            }
        };
        Self {
            route_id: "S1".into(),
            anchor: LatLon::new(29.65, -82.32),
            links: vec![
                link(700.0, &[0.5], 14.0, [0.10, 0.15, 0.05, 0.45], [-3.2, 0.2, 0.5, 0.0, 1.2]),
                link(850.0, &[0.35, 0.7], 13.0, [0.08, 0.20, 0.00, 0.50], [-3.0, 0.3, 0.4, 0.0, 1.0]),
                link(600.0, &[], 14.5, [0.12, 0.10, 0.04, 0.40], [-3.4, 0.0, 0.6, 0.1, 1.3]),
                link(900.0, &[0.5], 13.5, [0.05, 0.18, 0.06, 0.55], [-3.1, 0.2, 0.3, 0.0, 1.1]),
                link(750.0, &[0.4], 14.0, [0.10, 0.12, 0.03, 0.35], [-3.3, 0.1, 0.5, 0.0, 0.9]),
            ],
            dwell_sets: vec![
                vec![0.0, 0.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.0, 18.0, 25.0, 30.0, 40.0],
                vec![0.0, 5.0, 7.0, 9.0, 11.0, 14.0, 16.0, 20.0, 22.0, 28.0, 35.0, 45.0],
                vec![0.0, 0.0, 0.0, 6.0, 8.0, 9.0, 12.0, 14.0, 17.0, 21.0, 26.0, 33.0],
                vec![0.0, 4.0, 6.0, 8.0, 10.0, 13.0, 15.0, 18.0, 24.0, 30.0, 38.0, 50.0],
                vec![0.0, 0.0, 5.0, 7.0, 9.0, 11.0, 13.0, 16.0, 19.0, 23.0, 29.0, 36.0],
            ],
            intersections: vec![
                IntersectionTruth { mu: 12f64.ln(), sigma: 0.5 },
                IntersectionTruth { mu: 15f64.ln(), sigma: 0.45 },
                IntersectionTruth { mu: 10f64.ln(), sigma: 0.6 },
                IntersectionTruth { mu: 18f64.ln(), sigma: 0.4 },
                IntersectionTruth { mu: 11f64.ln(), sigma: 0.55 },
            ],
            layover: 30.0,
            start_date: NaiveDate::from_ymd_opt(2023, 8, 21).expect("valid date"),
            days: 28,
            service_hours: (6, 21),
            departure_minutes: vec![2, 30],
            rain_probability: 0.2,
            traffic_probability: 0.3,
            jam_fraction: 0.3,
            ping_interval: 3,
            speed_threshold: crate::inference::DEFAULT_SPEED_THRESHOLD,
            delta_t: crate::markov::DEFAULT_DELTA_T,
            buffer_radius: DEFAULT_BUFFER_RADIUS_M,
            clock: LocalClock::default(),
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn route_key(&self) -> RouteKey {
        RouteKey::new(self.route_id.clone(), 0)
    }

    /// Stop arc positions on the generated shape.
    pub fn stop_arcs(&self) -> Vec<f64> {
        let mut arcs = vec![START_PAD_M];
        for l in &self.links {
            arcs.push(arcs.last().unwrap() + l.length);
        }
        arcs
    }

    /// Intersection arc positions, in route order.
    pub fn intersection_arcs(&self) -> Vec<f64> {
        let stops = self.stop_arcs();
        self.links
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.intersection_fracs.iter().map(|f| stops[i] + f * l.length).collect::<Vec<_>>())
            .collect()
    }

    fn open_length(&self, link: &LinkTruth) -> f64 {
        link.length - 2.0 * self.buffer_radius * (1.0 + link.intersection_fracs.len() as f64)
    }

    /// Replaces link, dwell and intersection truth from a truth file:
    ///
    /// ```text
    /// link,<length>,<fracs ;-joined>,<beta×5>,<gamma×5>
    /// dwell,<values ;-joined>
    /// intersection,<mu>,<sigma>
    /// ```
    ///
    /// Records of each kind are taken in route order.
    pub fn apply_truth(&mut self, text: &str) -> Result<(), SynthError> {
        let mut links = Vec::new();
        let mut dwell_sets = Vec::new();
        let mut intersections = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| SynthError::Parse { line: k + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            let list = |s: &str| -> Result<Vec<f64>, SynthError> {
                s.split(';').filter(|p| !p.is_empty()).map(num).collect()
            };
            match fields[0] {
                "link" if fields.len() == 13 => {
                    let mut beta = [0.0; DESIGN_DIM];
                    let mut gamma = [0.0; DESIGN_DIM];
                    for j in 0..DESIGN_DIM {
                        beta[j] = num(fields[3 + j])?;
                        gamma[j] = num(fields[8 + j])?;
                    }
                    links.push(LinkTruth {
                        length: num(fields[1])?,
                        intersection_fracs: list(fields[2])?,
                        beta,
                        gamma,
                    });
                }
                "dwell" if fields.len() == 2 => dwell_sets.push(list(fields[1])?),
                "intersection" if fields.len() == 3 => intersections.push(IntersectionTruth {
                    mu: num(fields[1])?,
                    sigma: num(fields[2])?,
                }),
                _ => return Err(err(format!("unrecognised record `{line}`"))),
            }
        }
        self.links = links;
        self.dwell_sets = dwell_sets;
        self.intersections = intersections;
        self.validate()
    }

    pub fn truth_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";");
        let mut out = String::new();
        for l in &self.links {
            let _ = write!(out, "link,{},{}", l.length, join(&l.intersection_fracs));
            for v in l.beta.iter().chain(&l.gamma) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        for d in &self.dwell_sets {
            let _ = writeln!(out, "dwell,{}", join(d));
        }
        for i in &self.intersections {
            let _ = writeln!(out, "intersection,{},{}", i.mu, i.sigma);
        }
        out
    }

    /// Checks geometry and that every covariate combination yields a valid
    /// chain step and a free-flow speed above the threshold.
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        if self.links.is_empty() {
            return bad("no links".into());
        }
        if self.dwell_sets.len() != self.links.len() {
            return bad(format!("{} dwell sets for {} links", self.dwell_sets.len(), self.links.len()));
        }
        if let Some(k) = self.dwell_sets.iter().position(|d| d.is_empty() || d.iter().any(|&x| x < 0.0)) {
            return bad(format!("dwell set {} is empty or negative", k + 1));
        }
        let n_isec: usize = self.links.iter().map(|l| l.intersection_fracs.len()).sum();
        if self.intersections.len() != n_isec {
            return bad(format!("{} intersection laws for {n_isec} intersections", self.intersections.len()));
        }
        if self.intersections.iter().any(|i| !(i.sigma >= 0.0)) {
            return bad("negative intersection sigma".into());
        }
        if self.ping_interval <= 0 || self.departure_minutes.is_empty() || self.days == 0 {
            return bad("ping interval, departures and days must be positive".into());
        }
        let r = self.buffer_radius;
        let stops = self.stop_arcs();
        for (i, l) in self.links.iter().enumerate() {
            let mut marks = vec![stops[i]];
            marks.extend(l.intersection_fracs.iter().map(|f| stops[i] + f * l.length));
            marks.push(stops[i + 1]);
            if marks.windows(2).any(|w| w[1] - w[0] <= 2.0 * r + 5.0) {
                return bad(format!("link {}: features closer than twice the buffer radius", i + 1));
            }
            let open = self.open_length(l);
            for x in CovariateVector::all() {
                let z = x.design_row();
                let t: f64 = l.beta.iter().zip(&z).map(|(b, v)| b * v).sum::<f64>().exp();
                if !(t > self.delta_t) {
                    return bad(format!("link {}: road time {t:.2} s at {x} not above the time step", i + 1));
                }
                if !x.traffic && !(open / t > self.speed_threshold * SPEED_MARGIN) {
                    return bad(format!("link {}: free-flow speed {:.2} m/s at {x} below threshold", i + 1, open / t));
                }
            }
        }
        Ok(())
    }
}

/// True arrival and departure at one stop of one trip (zone entry and exit).
#[derive(Debug, Clone, PartialEq)]
pub struct StopTruth {
    pub trip_id: String,
    pub stop_index: usize,
    pub stop_id: String,
    pub t_arrival: f64,
    pub t_departure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTruthRecord {
    pub trip_id: String,
    pub link_index: usize,
    pub covariates: CovariateVector,
    pub road: f64,
    pub dwell: f64,
    pub intersection_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub gtfs: Vec<(&'static str, String)>,
    pub intersections: IntersectionSet,
    pub weather: WeatherTable,
    pub pings: Vec<PingRecord>,
    pub stop_truth: Vec<StopTruth>,
    pub link_truth: Vec<LinkTruthRecord>,
    /// Free-flow road-time draws redrawn because they fell below the threshold speed.
    pub redrawn: usize,
}

fn stop_id(k: usize) -> String {
    format!("P{k}")
}

fn intersection_id(j: usize) -> String {
    format!("X{j}")
}

/// Piecewise-linear motion on the arc axis; knots with equal times model an
/// instantaneous move.
#[derive(Debug, Default)]
struct Motion {
    knots: Vec<(f64, f64)>,
}

impl Motion {
    fn now(&self) -> (f64, f64) {
        *self.knots.last().expect("motion started")
    }

    fn push(&mut self, t: f64, arc: f64) {
        self.knots.push((t, arc));
    }

    fn move_to(&mut self, arc: f64, speed: f64) {
        let (t, a) = self.now();
        self.push(t + (arc - a) / speed, arc);
    }

    fn wait(&mut self, secs: f64) {
        let (t, a) = self.now();
        self.push(t + secs, a);
    }

    /// Position at `t`: the last knot at or before `t`, advanced towards the next.
    fn arc_at(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&(kt, _)| kt <= t).max(1) - 1;
        let (t0, a0) = self.knots[k];
        match self.knots.get(k + 1) {
            Some(&(t1, a1)) if t1 > t0 => a0 + (a1 - a0) * ((t - t0) / (t1 - t0)).clamp(0.0, 1.0),
            _ => a0,
        }
    }
}

fn planar_shape(spec: &SynthSpec) -> Polyline {
    let frame = LocalFrame::new(spec.anchor);
    let total = spec.stop_arcs().last().unwrap() + END_PAD_M;
    // East, then north-east, then east again.
    let a = total * 0.3;
    let b = total * 0.4;
    let d = std::f64::consts::FRAC_1_SQRT_2;
    let p1 = [a, 0.0];
    let p2 = [a + b * d, b * d];
    let p3 = [p2[0] + (total - a - b), p2[1]];
    Polyline::from_planar(frame, vec![[0.0, 0.0], p1, p2, p3])
}

fn hms(secs: i64) -> String {
    format!("{:02}:{:02}:{:02}", secs / 3600, (secs / 60) % 60, secs % 60)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let shape = planar_shape(spec);
    let frame = *shape.frame();
    let stops = spec.stop_arcs();
    let isecs = spec.intersection_arcs();
    let r = spec.buffer_radius;
    let route_key = spec.route_key();
    let cov_cfg = CovariateConfig {
        clock: spec.clock,
        speed_threshold: spec.speed_threshold,
        ..CovariateConfig::default()
    };

    let mut weather = WeatherTable::default();
    let mut wrng = ChaCha8Rng::seed_from_u64(spec.seed);
    for d in 0..spec.days {
        let date = spec.start_date + Duration::days(d as i64);
        for h in 0..24 {
            let cond = if wrng.random_bool(spec.rain_probability) { "Rain" } else { "Clear" };
            weather.insert(date, h, cond).expect("fresh table");
        }
    }

    let mut pings = Vec::new();
    let mut stop_truth = Vec::new();
    let mut link_truth = Vec::new();
    let mut trips = Vec::new();
    let mut redrawn = 0;
    let mut trip_no = 0u64;
    for d in 0..spec.days {
        let date = spec.start_date + Duration::days(d as i64);
        let midnight = spec.clock.local_midnight(date);
        for h in spec.service_hours.0..=spec.service_hours.1 {
            for &m in &spec.departure_minutes {
                trip_no += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(trip_no);
                let local_start = i64::from(h) * 3600 + i64::from(m) * 60;
                let t0: Timestamp = midnight + local_start;
                let trip_id = format!("T{}-{:02}{:02}", date.format("%Y%m%d"), h, m);
                let vehicle_id = format!("V{:02}{:02}", h, m);
                trips.push((trip_id.clone(), local_start));

                let mut motion = Motion::default();
                motion.push(t0 as f64, stops[0]);
                motion.wait(spec.layover);
                motion.move_to(stops[0] + r, f64::INFINITY);
                stop_truth.push(StopTruth {
                    trip_id: trip_id.clone(),
                    stop_index: 0,
                    stop_id: stop_id(0),
                    t_arrival: t0 as f64,
                    t_departure: motion.now().0,
                });
                let mut isec_base = 0;
                for (i, link) in spec.links.iter().enumerate() {
                    let depart = motion.now().0;
                    let x = CovariateVector {
                        rain: cov_cfg.rain_labels.is_rain(
                            weather
                                .lookup(spec.clock.local_date(depart as i64), spec.clock.local_hour(depart as i64).1)
                                .unwrap_or("Clear"),
                        ),
                        peak: cov_cfg.peak_hours.contains(&spec.clock.local_hour(depart as i64).1),
                        weekday: spec.clock.is_weekday(depart as i64),
                        traffic: rng.random_bool(spec.traffic_probability),
                    };
                    let z = x.design_row();
                    let mu: f64 = link.beta.iter().zip(&z).map(|(b, v)| b * v).sum();
                    let sigma = (0.5 * link.gamma.iter().zip(&z).map(|(g, v)| g * v).sum::<f64>()).exp();
                    let open = spec.open_length(link);
                    let road = loop {
                        let e: f64 = rng.sample(StandardNormal);
                        let t = (mu + sigma * e).exp();
                        if x.traffic || open / t > spec.speed_threshold * SPEED_MARGIN {
                            break t;
                        }
                        redrawn += 1;
                    };
                    let moving = if x.traffic { road * (1.0 - spec.jam_fraction) } else { road };
                    let speed = open / moving;

                    // Open pieces and intersection zones in order.
                    let centers: Vec<f64> = link.intersection_fracs.iter().map(|f| stops[i] + f * link.length).collect();
                    let mut pieces = Vec::new();
                    let mut from = stops[i] + r;
                    for c in &centers {
                        pieces.push((from, c - r));
                        from = c + r;
                    }
                    pieces.push((from, stops[i + 1] - r));
                    let jam_piece = pieces
                        .iter()
                        .enumerate()
                        .max_by(|a, b| (a.1 .1 - a.1 .0).total_cmp(&(b.1 .1 - b.1 .0)))
                        .map(|(k, _)| k)
                        .expect("at least one piece");

                    let mut isec_times = Vec::new();
                    for (k, &(lo, hi)) in pieces.iter().enumerate() {
                        if x.traffic && k == jam_piece {
                            motion.move_to((lo + hi) / 2.0, speed);
                            motion.wait(road * spec.jam_fraction);
                        }
                        motion.move_to(hi, speed);
                        if let Some(c) = centers.get(k) {
                            let law = spec.intersections[isec_base + k];
                            let e: f64 = rng.sample(StandardNormal);
                            let occ = (law.mu + law.sigma * e).exp();
                            isec_times.push(occ);
                            motion.move_to(c + r, 2.0 * r / occ);
                        }
                    }
                    isec_base += centers.len();

                    let t_arrival = motion.now().0;
                    let set = &spec.dwell_sets[i];
                    let dwell = set[rng.random_range(0..set.len())];
                    motion.move_to(stops[i + 1] + r, 2.0 * r / dwell);
                    stop_truth.push(StopTruth {
                        trip_id: trip_id.clone(),
                        stop_index: i + 1,
                        stop_id: stop_id(i + 1),
                        t_arrival,
                        t_departure: motion.now().0,
                    });
                    link_truth.push(LinkTruthRecord {
                        trip_id: trip_id.clone(),
                        link_index: i + 1,
                        covariates: x,
                        road,
                        dwell,
                        intersection_times: isec_times,
                    });
                }
                motion.move_to(stops.last().unwrap() + END_PAD_M * 0.8, EXIT_SPEED);

                let t_end = motion.now().0;
                let mut t = t0;
                while (t as f64) <= t_end {
                    let arc = motion.arc_at(t as f64);
                    pings.push(PingRecord {
                        trip_id: trip_id.clone(),
                        vehicle_id: vehicle_id.clone(),
                        timestamp: t,
                        position: frame.to_latlon(shape.point_at_xy(arc)),
                    });
                    t += spec.ping_interval;
                }
            }
        }
    }

    let intersections = IntersectionSet::new(
        isecs
            .iter()
            .enumerate()
            .map(|(j, &a)| Intersection {
                id: intersection_id(j),
                position: frame.to_latlon(shape.point_at_xy(a)),
            })
            .collect(),
    )
    .expect("unique generated ids");

    let mut gtfs = Vec::new();
    gtfs.push(("routes.txt", format!("route_id,route_short_name\n{0},{0}\n", spec.route_id)));
    let mut stops_txt = String::from("stop_id,stop_name,stop_lat,stop_lon\n");
    for (k, &a) in stops.iter().enumerate() {
        let p = frame.to_latlon(shape.point_at_xy(a));
        let _ = writeln!(stops_txt, "{},Stop {k},{:.9},{:.9}", stop_id(k), p.lat, p.lon);
    }
    gtfs.push(("stops.txt", stops_txt));
    let mut shapes_txt = String::from("shape_id,shape_pt_lat,shape_pt_lon,shape_pt_sequence\n");
    for k in 0..shape.vertex_count() {
        let p = shape.vertex(k);
        let _ = writeln!(shapes_txt, "SH1,{:.9},{:.9},{}", p.lat, p.lon, k + 1);
    }
    gtfs.push(("shapes.txt", shapes_txt));
    let mut trips_txt = String::from("route_id,service_id,trip_id,direction_id,shape_id\n");
    let mut stop_times = String::from("trip_id,arrival_time,departure_time,stop_id,stop_sequence\n");
    for (trip_id, start) in &trips {
        let _ = writeln!(trips_txt, "{},ALL,{trip_id},0,SH1", spec.route_id);
        for k in 0..stops.len() {
            let at = hms(start + 120 * k as i64);
            let _ = writeln!(stop_times, "{trip_id},{at},{at},{},{}", stop_id(k), k + 1);
        }
    }
    gtfs.push(("trips.txt", trips_txt));
    gtfs.push(("stop_times.txt", stop_times));

    debug_assert_eq!(route_key, spec.route_key());
    Ok(SynthCorpus {
        spec: spec.clone(),
        gtfs,
        intersections,
        weather,
        pings,
        stop_truth,
        link_truth,
        redrawn,
    })
}

impl SynthCorpus {
    pub fn stop_truth_csv(&self) -> String {
        let mut out = String::from("trip_id,stop_index,stop_id,t_arrival,t_departure\n");
        for s in &self.stop_truth {
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.3}",
                s.trip_id, s.stop_index, s.stop_id, s.t_arrival, s.t_departure
            );
        }
        out
    }

    pub fn link_truth_csv(&self) -> String {
        let mut out = String::from("trip_id,link_index,rain,peak,weekday,traffic,road,dwell,intersection_times\n");
        for l in &self.link_truth {
            let b = l.covariates.bits();
            let isec = l.intersection_times.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3},{:.3},{isec}",
                l.trip_id, l.link_index, b[0], b[1], b[2], b[3], l.road, l.dwell
            );
        }
        out
    }

    /// Writes `gtfs/*.txt`, `pings.csv`, `weather.csv`, `intersections.csv`,
    /// `truth.txt`, `truth_stops.csv` and `truth_links.csv` under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        let gtfs_dir = dir.join("gtfs");
        std::fs::create_dir_all(&gtfs_dir)?;
        for (name, text) in &self.gtfs {
            std::fs::write(gtfs_dir.join(name), text)?;
        }
        let mut pings = String::from("trip_id,vehicle_id,timestamp,lat,lon\n");
        pings.push_str(&crate::ingest::write_pings(&self.pings));
        std::fs::write(dir.join("pings.csv"), pings)?;
        std::fs::write(dir.join("weather.csv"), self.weather.to_csv())?;
        std::fs::write(dir.join("intersections.csv"), self.intersections.to_csv())?;
        std::fs::write(dir.join("truth.txt"), self.spec.truth_text())?;
        std::fs::write(dir.join("truth_stops.csv"), self.stop_truth_csv())?;
        std::fs::write(dir.join("truth_links.csv"), self.link_truth_csv())?;
        Ok(())
    }
}
