use std::collections::BTreeMap;

use linktime::stats::{breusch_pagan, ks_lognormal, runs_test, StatError, TestResult};

use super::load_grouped_observations;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{emit, prob, real, Table, MISSING};

/// Per-link test table: K-S on road and intersection times, Breusch-Pagan on
/// log road times, runs test on road times in departure order.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    let grouped = load_grouped_observations(cfg)?;
    let mut table = Table::new(&[
        "route", "link", "component", "feature", "test", "statistic", "p_value", "n", "decision",
    ]);
    for ((key, link), obs) in &grouped {
        let mut push = |component: &str, feature: &str, test: &str, r: Result<TestResult, StatError>| {
            let mut row = vec![key.to_string(), link.to_string(), component.into(), feature.into(), test.into()];
            match r {
                Ok(t) => row.extend([real(t.statistic), prob(t.p_value), t.n.to_string(), t.decision_at_0_05.to_string()]),
                Err(e) => row.extend([MISSING.into(), MISSING.into(), MISSING.into(), e.to_string()]),
            }
            table.push(row);
        };
        let roads: Vec<f64> = obs.iter().map(|o| o.road as f64).collect();
        let logs: Vec<f64> = obs.iter().map(|o| o.log_road()).collect();
        let rows: Vec<_> = obs.iter().map(|o| o.covariates.design_row()).collect();
        push("road", "", "ks_lognormal", ks_lognormal(&roads));
        push("road", "", "breusch_pagan", breusch_pagan(&logs, &rows));
        push("road", "", "runs", runs_test(&roads));

        let mut isec: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for o in obs {
            for (id, s) in &o.intersection_times {
                if *s > 0 {
                    isec.entry(id).or_default().push(*s as f64);
                }
            }
        }
        for (id, samples) in isec {
            push("intersection", id, "ks_lognormal", ks_lognormal(&samples));
        }
    }
    emit(&cfg.out, "validation", &table, cfg.json)
}
