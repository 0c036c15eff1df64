use std::collections::BTreeMap;

use linktime::geometry::build_route_model;
use linktime::ingest::{load_gtfs_static, load_intersections, IntersectionSet, RouteKey, StaticNetwork};
use linktime::inference::{load_observations, LinkObservation};
use linktime::RouteModel;

use crate::config::RunConfig;
use crate::error::CliError;

pub mod evaluate;
pub mod fit;
pub mod infer;
pub mod predict;
pub mod simulate;
pub mod synth;
pub mod validate;

pub fn load_network(cfg: &RunConfig) -> Result<(StaticNetwork, IntersectionSet), CliError> {
    let net = load_gtfs_static(cfg.input(&cfg.gtfs, "gtfs")?)?;
    let xs = load_intersections(cfg.input(&cfg.intersections, "intersections")?)?;
    Ok((net, xs))
}

/// Route models for the selected routes, ordered by route key.
pub fn route_models(
    cfg: &RunConfig,
    net: &StaticNetwork,
    xs: &IntersectionSet,
) -> Result<BTreeMap<RouteKey, RouteModel>, CliError> {
    let mut out = BTreeMap::new();
    for key in net.routes.iter().filter(|k| cfg.wants_route(k)) {
        out.insert(key.clone(), build_route_model(net, xs, key, cfg.buffer_radius)?);
    }
    if let Some(r) = &cfg.route {
        if out.is_empty() {
            return Err(CliError::input(format!("route {r} not in the feed")));
        }
    }
    Ok(out)
}

/// Observations for the selected routes, grouped by route and link.
pub fn load_grouped_observations(
    cfg: &RunConfig,
) -> Result<BTreeMap<(RouteKey, usize), Vec<LinkObservation>>, CliError> {
    let obs = load_observations(RunConfig::existing(&cfg.observations)?)?;
    let mut grouped: BTreeMap<(RouteKey, usize), Vec<LinkObservation>> = BTreeMap::new();
    for o in obs.into_iter().filter(|o| cfg.wants_route(&o.route_key)) {
        grouped.entry((o.route_key.clone(), o.link_index)).or_default().push(o);
    }
    for v in grouped.values_mut() {
        v.sort_by(|a, b| (a.depart_prev, &a.trip_id).cmp(&(b.depart_prev, &b.trip_id)));
    }
    if grouped.is_empty() {
        return Err(CliError::input(format!("no observations in {}", cfg.observations.display())));
    }
    Ok(grouped)
}
