use std::collections::BTreeMap;

use linktime::geometry::build_route_model;
use linktime::hetlognorm::{fit, FitOptions};
use linktime::inference::{infer_route, CovariateConfig, LinkObservation};
use linktime::ingest::{load_gtfs_static, load_intersections, load_pings, load_weather, PingOptions};
use linktime::markov::{predict_remaining, MarkovConfig, Origin};
use linktime::synth::{generate, SynthCorpus, SynthSpec};
use linktime::{ComponentSet, RouteModel};

struct Loaded {
    corpus: SynthCorpus,
    rm: RouteModel,
    obs: Vec<LinkObservation>,
    discarded: usize,
}

fn run(spec: &SynthSpec) -> Loaded {
    let corpus = generate(spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to(dir.path()).unwrap();
    let net = load_gtfs_static(dir.path().join("gtfs")).unwrap();
    let xs = load_intersections(dir.path().join("intersections.csv")).unwrap();
    let weather = load_weather(dir.path().join("weather.csv")).unwrap();
    let pings = load_pings(dir.path().join("pings.csv"), &PingOptions { clock: spec.clock, ..PingOptions::default() }).unwrap();
    let rm = build_route_model(&net, &xs, &spec.route_key(), spec.buffer_radius).unwrap();
    let cfg = CovariateConfig {
        clock: spec.clock,
        ..CovariateConfig::default()
    };
    let report = infer_route(&net, &rm, &pings, &weather, &cfg);
    Loaded {
        corpus,
        rm,
        obs: report.observations,
        discarded: report.discarded.len(),
    }
}

#[test]
fn route_model_matches_layout() {
    let spec = SynthSpec { days: 1, ..SynthSpec::default() };
    let l = run(&spec);
    assert_eq!(l.rm.links.len(), spec.links.len());
    assert_eq!(l.rm.intersections.len(), spec.intersection_arcs().len());
    for (link, truth) in l.rm.links.iter().zip(&spec.links) {
        assert!((link.length - truth.length).abs() < 0.5, "{} vs {}", link.length, truth.length);
        assert_eq!(link.intersections.len(), truth.intersection_fracs.len());
    }
}

#[test]
fn inferred_times_track_truth() {
    let spec = SynthSpec { days: 3, ..SynthSpec::default() };
    let l = run(&spec);
    assert_eq!(l.discarded, 0);
    let trips = spec.days * 16 * spec.departure_minutes.len();
    assert_eq!(l.obs.len(), trips * spec.links.len());
    assert!(l.obs.iter().all(LinkObservation::identity_holds));

    let truth: BTreeMap<(&str, usize), _> = l
        .corpus
        .link_truth
        .iter()
        .map(|t| ((t.trip_id.as_str(), t.link_index), t))
        .collect();
    let tol = 2.0 * spec.ping_interval as f64 + 1.0;
    let mut traffic_agree = 0;
    for o in &l.obs {
        let t = truth[&(o.trip_id.as_str(), o.link_index)];
        assert!((o.road as f64 - t.road).abs() <= tol, "road {} vs {:.2}", o.road, t.road);
        assert!((o.dwell as f64 - t.dwell).abs() <= tol, "dwell {} vs {}", o.dwell, t.dwell);
        assert_eq!(o.covariates.rain, t.covariates.rain);
        assert_eq!(o.covariates.peak, t.covariates.peak);
        assert_eq!(o.covariates.weekday, t.covariates.weekday);
        traffic_agree += usize::from(o.covariates.traffic == t.covariates.traffic);
    }
    assert!(traffic_agree as f64 >= 0.98 * l.obs.len() as f64, "{traffic_agree} of {}", l.obs.len());
}

#[test]
fn near_deterministic_truth_is_recovered_to_a_ping() {
    let mut spec = SynthSpec {
        days: 1,
        ping_interval: 1,
        ..SynthSpec::default()
    };
    for link in &mut spec.links {
        link.gamma = [-30.0, 0.0, 0.0, 0.0, 0.0];
    }
    for d in &mut spec.dwell_sets {
        d.truncate(1);
        d[0] = 12.0;
    }
    for i in &mut spec.intersections {
        i.sigma = 0.0;
    }
    let l = run(&spec);
    assert_eq!(l.obs.len(), l.corpus.link_truth.len());
    let links: BTreeMap<(&str, usize), _> = l
        .corpus
        .link_truth
        .iter()
        .map(|t| ((t.trip_id.as_str(), t.link_index), t))
        .collect();
    let stops: BTreeMap<(&str, usize), _> = l
        .corpus
        .stop_truth
        .iter()
        .map(|t| ((t.trip_id.as_str(), t.stop_index), t))
        .collect();
    for o in &l.obs {
        let t = links[&(o.trip_id.as_str(), o.link_index)];
        // Event stamps are the first ping past the true crossing; a ping on
        // the boundary itself still counts as inside the zone.
        let dep_prev = stops[&(o.trip_id.as_str(), o.link_index - 1)].t_departure;
        let dep = stops[&(o.trip_id.as_str(), o.link_index)].t_departure;
        let lag_prev = o.depart_prev as f64 - dep_prev;
        let lag = (o.depart_prev + o.total) as f64 - dep;
        assert!((-1e-6..=1.0 + 1e-6).contains(&lag_prev), "{lag_prev}");
        assert!((-1e-6..=1.0 + 1e-6).contains(&lag), "{lag}");
        assert!((o.dwell as f64 - t.dwell).abs() <= 1.0);
        for ((_, s), truth) in o.intersection_times.iter().zip(&t.intersection_times) {
            assert!((*s as f64 - truth).abs() <= 1.0, "{s} vs {truth}");
        }
        let k = t.intersection_times.len() as f64;
        assert!((o.road as f64 - t.road).abs() <= 1.0 + 2.0 * k, "{} vs {}", o.road, t.road);
    }
}

#[test]
fn coefficients_recovered_at_scale() {
    // About 5000 traversals per link.
    let spec = SynthSpec {
        days: 157,
        seed: 11,
        ..SynthSpec::default()
    };
    let l = run(&spec);
    for link in &l.rm.links {
        let data: Vec<(f64, _)> = l
            .obs
            .iter()
            .filter(|o| o.link_index == link.index)
            .map(|o| (o.log_road(), o.covariates))
            .collect();
        assert!(data.len() >= 5000);
        let m = fit(&data, &FitOptions::default()).unwrap();
        let truth = &spec.links[link.index - 1];
        for k in 0..5 {
            assert!(
                (m.beta[k] - truth.beta[k]).abs() < 0.05,
                "link {} beta[{k}]: {} vs {}",
                link.index,
                m.beta[k],
                truth.beta[k]
            );
        }
    }
}

#[test]
fn fit_and_simulate_end_to_end() {
    let spec = SynthSpec { days: 14, ..SynthSpec::default() };
    let l = run(&spec);
    let mut models = BTreeMap::new();
    for link in &l.rm.links {
        let data: Vec<(f64, _)> = l
            .obs
            .iter()
            .filter(|o| o.link_index == link.index)
            .map(|o| (o.log_road(), o.covariates))
            .collect();
        let m = fit(&data, &FitOptions::default()).unwrap();
        let truth = &spec.links[link.index - 1];
        assert!((m.beta[0] - truth.beta[0]).abs() < 0.1, "link {}: {:?}", link.index, m.beta);
        assert!((m.beta[4] - truth.beta[4]).abs() < 0.15, "link {}: {:?}", link.index, m.beta);
        models.insert(link.index, m);
    }
    let comps = ComponentSet::fit(&l.rm, &l.obs, 10);
    assert_eq!(comps.dwell.len(), spec.links.len());
    assert_eq!(comps.intersections.len(), spec.intersection_arcs().len());

    let origin = Origin::locate(&l.rm, l.rm.stop_arc(0) + 30.0, 0).unwrap();
    let x = linktime::CovariateVector::from_bits([0, 0, 1, 0]);
    let summary = predict_remaining(&l.rm, &models, &comps, &x, &origin, &MarkovConfig::default()).unwrap();
    assert_eq!(summary.stops.len(), spec.links.len());
    for w in summary.stops.windows(2) {
        assert!(w[0].mean_remaining < w[1].mean_remaining);
    }
    for s in &summary.stops {
        assert!(s.p2_5 <= s.mean_remaining && s.mean_remaining <= s.p97_5);
    }
}
