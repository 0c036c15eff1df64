use std::collections::BTreeMap;

use linktime::inference::{infer_route, write_observations, InferenceError};
use linktime::ingest::{load_pings, load_weather};

use super::{load_network, route_models};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{emit, Table};

/// Writes `observations.csv`, `infer_summary.csv` and `discards.csv`.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    let (net, xs) = load_network(cfg)?;
    let pings = load_pings(cfg.input(&cfg.pings, "pings")?, &cfg.ping_options)?;
    let weather = load_weather(cfg.input(&cfg.weather, "weather")?)?;
    let models = route_models(cfg, &net, &xs)?;

    let mut observations = Vec::new();
    let mut discards = Table::new(&["route", "trip_id", "link", "reason"]);
    for rm in models.values() {
        let report = infer_route(&net, rm, &pings, &weather, &cfg.covariates);
        if let Some(d) = report.discarded.iter().find(|d| matches!(d.reason, InferenceError::Weather(_))) {
            return Err(CliError::input(format!("trip {}: {}", d.trip_id, d.reason)));
        }
        for d in &report.discarded {
            discards.push(vec![
                rm.route_key.to_string(),
                d.trip_id.clone(),
                d.link_index.map_or_else(String::new, |i| i.to_string()),
                d.reason.to_string(),
            ]);
        }
        observations.extend(report.observations);
    }
    discards.rows.sort();
    debug_assert!(observations.iter().all(|o| o.identity_holds()));

    let mut counts: BTreeMap<(String, usize), [usize; 3]> = BTreeMap::new();
    for o in &observations {
        let c = counts.entry((o.route_key.to_string(), o.link_index)).or_default();
        c[0] += 1;
        c[1] += usize::from(o.flags.interpolated);
        c[2] += usize::from(o.flags.traffic_unobserved);
    }
    let mut summary = Table::new(&["route", "link", "observations", "interpolated", "traffic_unobserved"]);
    for ((route, link), c) in counts {
        summary.push(vec![route, link.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()]);
    }

    if let Some(parent) = cfg.observations.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&cfg.observations, write_observations(&observations))?;
    emit(&cfg.out, "discards", &discards, cfg.json)?;
    emit(&cfg.out, "infer_summary", &summary, cfg.json)
}
