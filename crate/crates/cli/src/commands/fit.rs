use std::collections::BTreeMap;

use linktime::hetlognorm::fit;
use linktime::store::{write_store, FittedRoute};
use linktime::ComponentSet;

use super::{load_grouped_observations, load_network, route_models};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{emit, real, Table, MISSING};

const COEF_NAMES: [&str; 5] = ["intercept", "rain", "peak", "weekday", "traffic"];

/// Fits every link, writes the model store and `fit.csv`. Fails only if no
/// link could be fitted.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    let grouped = load_grouped_observations(cfg)?;
    let (net, xs) = load_network(cfg)?;
    let models = route_models(cfg, &net, &xs)?;

    let mut header = vec!["route", "link", "n", "iterations", "loglik", "status"];
    let beta_cols: Vec<String> = COEF_NAMES.iter().map(|c| format!("beta_{c}")).collect();
    let gamma_cols: Vec<String> = COEF_NAMES.iter().map(|c| format!("gamma_{c}")).collect();
    header.extend(beta_cols.iter().map(String::as_str));
    header.extend(gamma_cols.iter().map(String::as_str));
    let mut table = Table::new(&header);

    let mut routes: BTreeMap<_, FittedRoute> = BTreeMap::new();
    let mut fitted = 0;
    for ((key, link), obs) in &grouped {
        if !models.contains_key(key) {
            return Err(CliError::input(format!("observations for route {key}, which is not in the feed")));
        }
        let route = routes.entry(key.clone()).or_insert_with(|| FittedRoute {
            route_key: key.clone(),
            links: BTreeMap::new(),
            components: ComponentSet::default(),
        });
        let data: Vec<_> = obs.iter().map(|o| (o.log_road(), o.covariates)).collect();
        let mut row = vec![key.to_string(), link.to_string(), data.len().to_string()];
        match fit(&data, &cfg.fit_options) {
            Ok(m) => {
                row.extend([m.iterations.to_string(), real(m.loglik), "ok".into()]);
                row.extend((0..5).map(|k| m.beta_coef(k).map_or(MISSING.into(), real)));
                row.extend((0..5).map(|k| m.gamma_coef(k).map_or(MISSING.into(), real)));
                route.links.insert(*link, m);
                fitted += 1;
            }
            Err(e) => {
                row.extend([MISSING.into(), MISSING.into(), e.to_string()]);
                row.extend(std::iter::repeat_n(MISSING.to_string(), 10));
            }
        }
        table.push(row);
    }
    for (key, route) in routes.iter_mut() {
        let all: Vec<_> = grouped
            .iter()
            .filter(|((k, _), _)| k == key)
            .flat_map(|(_, v)| v.iter().cloned())
            .collect();
        route.components = ComponentSet::fit(&models[key], &all, cfg.component_min_samples);
    }
    if fitted == 0 {
        let text = emit(&cfg.out, "fit", &table, cfg.json)?;
        eprint!("{text}");
        return Err(CliError::numerical("no link model could be fitted"));
    }
    if let Some(parent) = cfg.store.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let list: Vec<FittedRoute> = routes.into_values().collect();
    std::fs::write(&cfg.store, write_store(&list))?;
    emit(&cfg.out, "fit", &table, cfg.json)
}
