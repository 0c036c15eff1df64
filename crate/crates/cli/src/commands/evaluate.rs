use linktime::evaluation::{evaluate_split, Scores};

use super::load_grouped_observations;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{emit, secs, Table, MISSING};

/// Date-cut comparison of the log-normal model with the historical-mean and
/// linear baselines. Writes `evaluation.csv` and an aligned `evaluation.txt`.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    let cut = cfg.cut.ok_or_else(|| CliError::input("missing --cut"))?;
    let grouped = load_grouped_observations(cfg)?;
    let all: Vec<_> = grouped.into_values().flatten().collect();
    let comparisons = evaluate_split(&all, cut, &cfg.fit_options).map_err(|e| CliError::input(e.to_string()))?;

    let mut table = Table::new(&["route", "link", "n_train", "n_test", "modal"]);
    for model in ["ln", "hm", "lr"] {
        for metric in ["mae", "rmse", "bw"] {
            table.header.push(format!("{model}_{metric}"));
        }
    }
    for c in &comparisons {
        let mut row = vec![
            c.route_key.to_string(),
            c.link_index.to_string(),
            c.n_train.to_string(),
            c.n_test.to_string(),
            c.modal.map_or(MISSING.into(), |x| x.to_string()),
        ];
        for scores in [&c.lognormal, &c.historical, &c.linear] {
            match scores {
                Ok(Scores { mae, rmse, bound_width }) => row.extend([secs(*mae), secs(*rmse), secs(*bound_width)]),
                Err(_) => row.extend(std::iter::repeat_n(MISSING.to_string(), 3)),
            }
        }
        table.push(row);
    }
    let csv = emit(&cfg.out, "evaluation", &table, cfg.json)?;
    let aligned = table.to_aligned();
    std::fs::write(cfg.out.join("evaluation.txt"), &aligned)?;
    Ok(if cfg.json { csv } else { aligned })
}
