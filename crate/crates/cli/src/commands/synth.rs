use std::path::Path;

use linktime::synth::{generate, SynthSpec};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::json_text;

/// Writes a synthetic corpus under the output directory and reports its size.
pub fn run(cfg: &RunConfig, truth: Option<&Path>, days: Option<usize>, ping_interval: Option<i64>) -> Result<String, CliError> {
    let mut spec = SynthSpec {
        clock: cfg.clock,
        buffer_radius: cfg.buffer_radius,
        speed_threshold: cfg.covariates.speed_threshold,
        delta_t: cfg.markov.delta_t,
        ..SynthSpec::default()
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    if let Some(d) = days {
        spec.days = d;
    }
    if let Some(p) = ping_interval {
        spec.ping_interval = p;
    }
    if let Some(path) = truth {
        let text = std::fs::read_to_string(RunConfig::existing(path)?)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        spec.apply_truth(&text)?;
    }
    let corpus = generate(&spec)?;
    corpus.write_to(&cfg.out)?;

    let trips = corpus.stop_truth.iter().filter(|s| s.stop_index == 0).count();
    let summary = json!({
        "route": spec.route_key().to_string(),
        "links": spec.links.len(),
        "days": spec.days,
        "trips": trips,
        "pings": corpus.pings.len(),
        "seed": spec.seed,
        "redrawn_free_flow": corpus.redrawn,
    });
    if cfg.json {
        return Ok(json_text(&summary));
    }
    Ok(format!(
        "route,links,days,trips,pings,seed,redrawn_free_flow\n{},{},{},{},{},{},{}\n",
        spec.route_key(),
        spec.links.len(),
        spec.days,
        trips,
        corpus.pings.len(),
        spec.seed,
        corpus.redrawn
    ))
}
