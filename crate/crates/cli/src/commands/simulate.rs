use linktime::geometry::build_route_model;
use linktime::inference::{project_pings, repair_monotone, ProjectedPing};
use linktime::ingest::{load_pings, load_weather};
use linktime::markov::{RealtimeSession, SimError};
use linktime::store::load_store;
use linktime::SimulationSummary;
use serde_json::{json, Value};

use super::load_network;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{json_text, secs, Table};

fn stop_rows(table: &mut Table, prefix: &[String], s: &SimulationSummary) {
    for stop in &s.stops {
        let mut row = prefix.to_vec();
        row.extend([
            stop.stop_id.clone(),
            secs(stop.mean_remaining),
            secs(stop.p2_5),
            secs(stop.p97_5),
        ]);
        table.push(row);
    }
}

fn origin_json(s: &SimulationSummary) -> Value {
    json!({
        "link_index": s.origin.link_index,
        "arc_pos_m": (s.origin.arc_pos * 1000.0).round() / 1000.0,
        "timestamp": s.origin.timestamp,
        "covariates": s.covariates.to_string(),
        "runs": s.runs,
    })
}

fn off_route(trip: &str, at: i64) -> impl Fn(SimError) -> CliError + '_ {
    move |e| match e {
        SimError::OffRoute(_) => CliError::input(format!("trip {trip} is not on a link at {at}: {e}")),
        other => other.into(),
    }
}

/// Remaining time to every downstream stop from the trip's position at `at`.
///
/// The position is the last ping at or before `at`; the traffic indicator is
/// replayed over the trip's pings up to it. In replay mode a batch of rows is
/// emitted at the first on-route ping and again at every indicator flip.
pub fn run(cfg: &RunConfig, trip_id: &str, at: i64, replay: bool) -> Result<String, CliError> {
    let (net, xs) = load_network(cfg)?;
    let trip = net
        .trips
        .get(trip_id)
        .ok_or_else(|| CliError::input(format!("trip {trip_id} not in the feed")))?;
    let rm = build_route_model(&net, &xs, &trip.route, cfg.buffer_radius)?;
    let routes = load_store(RunConfig::existing(&cfg.store)?)?;
    let fitted = routes
        .iter()
        .find(|r| r.route_key == trip.route)
        .ok_or_else(|| CliError::input(format!("no fitted models for route {}", trip.route)))?;
    let pings = load_pings(cfg.input(&cfg.pings, "pings")?, &cfg.ping_options)?;
    let weather = load_weather(cfg.input(&cfg.weather, "weather")?)?;
    let segment = pings
        .segments_for(trip_id)
        .find(|s| s.start() <= at && at <= s.end())
        .ok_or_else(|| CliError::input(format!("trip {trip_id} not found at timestamp {at}")))?;
    let prefix: Vec<_> = segment.pings.iter().filter(|p| p.timestamp <= at).cloned().collect();
    let projected: Vec<ProjectedPing> = project_pings(&rm, &prefix)
        .into_iter()
        .filter(|p| p.offset <= cfg.covariates.max_ping_offset)
        .collect();
    let track = repair_monotone(&projected);
    let last = *track
        .last()
        .ok_or_else(|| CliError::input(format!("trip {trip_id} has no usable ping at or before {at}")))?;

    let mut session = RealtimeSession::new(
        &rm,
        &fitted.links,
        &fitted.components,
        &weather,
        cfg.covariates.clone(),
        cfg.markov,
    );
    let header = json!({
        "trip_id": trip_id,
        "route": trip.route.to_string(),
        "at": at,
        "delta_t": cfg.markov.delta_t,
        "seed": cfg.markov.seed,
    });

    if !replay {
        for p in &track {
            session.observe(*p);
        }
        let summary = session.predict_from(&last).map_err(off_route(trip_id, at))?;
        let mut table = Table::new(&["stop_id", "mean_s", "p2_5_s", "p97_5_s"]);
        stop_rows(&mut table, &[], &summary);
        std::fs::create_dir_all(&cfg.out)?;
        std::fs::write(cfg.out.join("simulate.csv"), table.to_csv())?;
        if cfg.json {
            let mut v = header;
            v["origin"] = origin_json(&summary);
            v["stops"] = table.to_json_value();
            let text = json_text(&v);
            std::fs::write(cfg.out.join("simulate.json"), &text)?;
            return Ok(text);
        }
        return Ok(table.to_csv());
    }

    let mut table = Table::new(&["batch", "tau", "traffic", "stop_id", "mean_s", "p2_5_s", "p97_5_s"]);
    let mut batches = Vec::new();
    for p in &track {
        let flipped = session.observe(*p);
        if rm.link_at(p.arc_pos).is_none() || !(batches.is_empty() || flipped) {
            continue;
        }
        let summary = session.predict_from(p)?;
        let prefix = [
            batches.len().to_string(),
            p.timestamp.to_string(),
            u8::from(session.traffic).to_string(),
        ];
        let mut rows = Table::new(&["stop_id", "mean_s", "p2_5_s", "p97_5_s"]);
        stop_rows(&mut rows, &[], &summary);
        stop_rows(&mut table, &prefix, &summary);
        batches.push(json!({
            "batch": batches.len(),
            "tau": p.timestamp,
            "traffic": session.traffic,
            "origin": origin_json(&summary),
            "stops": rows.to_json_value(),
        }));
    }
    if batches.is_empty() {
        return Err(CliError::input(format!("trip {trip_id} is not on a link at or before {at}")));
    }
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("replay.csv"), table.to_csv())?;
    if cfg.json {
        let mut v = header;
        v["batches"] = Value::Array(batches);
        let text = json_text(&v);
        std::fs::write(cfg.out.join("replay.json"), &text)?;
        return Ok(text);
    }
    Ok(table.to_csv())
}
