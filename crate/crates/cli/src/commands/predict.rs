use linktime::hetlognorm::{predict_interval, DEFAULT_LEVEL};
use linktime::store::load_store;
use linktime::CovariateVector;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{emit, secs, Table, MISSING};

pub fn parse_covariates(s: &str) -> Result<CovariateVector, CliError> {
    let bits: Vec<u8> = s
        .chars()
        .filter(|c| !matches!(c, ',' | ' ' | '[' | ']'))
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(()),
        })
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::input(format!("bad covariates `{s}`")))?;
    let bits: [u8; 4] = bits
        .try_into()
        .map_err(|_| CliError::input(format!("covariates `{s}` need four 0/1 values: rain,peak,weekday,traffic")))?;
    Ok(CovariateVector::from_bits(bits))
}

/// Road-time point prediction and 95% bounds per link and covariate vector.
pub fn run(cfg: &RunConfig, covariates: Option<&str>) -> Result<String, CliError> {
    let routes = load_store(RunConfig::existing(&cfg.store)?)?;
    let xs: Vec<CovariateVector> = match covariates {
        Some(s) => vec![parse_covariates(s)?],
        None => CovariateVector::all().collect(),
    };
    let mut table = Table::new(&["route", "link", "covariates", "point_s", "lower_s", "upper_s"]);
    for route in routes.iter().filter(|r| cfg.wants_route(&r.route_key)) {
        for (link, m) in &route.links {
            for x in &xs {
                let mut row = vec![route.route_key.to_string(), link.to_string(), x.to_string()];
                match predict_interval(m, x, DEFAULT_LEVEL) {
                    Ok(p) => row.extend([secs(p.point), secs(p.lower), secs(p.upper)]),
                    Err(_) => row.extend([MISSING.into(), MISSING.into(), MISSING.into()]),
                }
                table.push(row);
            }
        }
    }
    if table.rows.is_empty() {
        return Err(CliError::input("no fitted links in the store for the selected route"));
    }
    emit(&cfg.out, "predictions", &table, cfg.json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariate_formats() {
        let want = CovariateVector::from_bits([0, 1, 1, 0]);
        assert_eq!(parse_covariates("0,1,1,0").unwrap(), want);
        assert_eq!(parse_covariates("0110").unwrap(), want);
        assert_eq!(parse_covariates("[0,1,1,0]").unwrap(), want);
        assert!(parse_covariates("0,1,1").is_err());
        assert!(parse_covariates("0,1,2,0").is_err());
    }
}
