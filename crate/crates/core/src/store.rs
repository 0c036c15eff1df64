//! Plain-text model store.
//!
//! Comma-separated records, one per line, first field the record type:
//!
//! ```text
//! route,<route_id>,<direction_id>
//! link,<index>,<n>,<iterations>,<loglik>,<mask>,<beta×5>,<gamma×5>,<fim×100>
//! dwell,<stop_id>,<count>,<samples…>
//! intersection,<intersection_id>,<mu_s>,<sigma_s>,<n>,<zero_fraction>
//! pooled_dwell,<count>,<samples…>
//! pooled_intersection,<mu_s>,<sigma_s>,<n>,<zero_fraction>
//! ```
//!
//! `mask` is five `0`/`1` characters; coefficients of masked columns are
//! written as `NA`. The FIM is row-major. Reals carry 17 significant digits so
//! a reload is bit-exact. Records after a `route` line belong to that route.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::components::{ComponentSet, EmpiricalDwell, IntersectionLogNormal, POOLED_ID};
use crate::hetlognorm::{HetLogNormalModel, PARAM_DIM};
use crate::ingest::{read_table, IngestError, RouteKey};
use crate::linalg::DESIGN_DIM;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FittedRoute {
    pub route_key: RouteKey,
    pub links: BTreeMap<usize, HetLogNormalModel>,
    pub components: ComponentSet,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn coef(v: f64, present: bool) -> String {
    if present {
        real(v)
    } else {
        "NA".into()
    }
}

pub fn write_store(routes: &[FittedRoute]) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let mut put = |rec: Vec<String>| w.write_record(&rec).expect("writing to memory");
    for r in routes {
        put(vec!["route".into(), r.route_key.route_id.clone(), r.route_key.direction_id.to_string()]);
        for (index, m) in &r.links {
            let mut rec = vec![
                "link".into(),
                index.to_string(),
                m.n.to_string(),
                m.iterations.to_string(),
                real(m.loglik),
                m.active_mask.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            ];
            rec.extend((0..DESIGN_DIM).map(|k| coef(m.beta[k], m.active_mask[k])));
            rec.extend((0..DESIGN_DIM).map(|k| coef(m.gamma[k], m.active_mask[k])));
            for i in 0..PARAM_DIM {
                rec.extend((0..PARAM_DIM).map(|j| real(m.fim[(i, j)])));
            }
            put(rec);
        }
        for d in r.components.dwell.values() {
            let mut rec = vec!["dwell".into(), d.stop_id.clone(), d.samples.len().to_string()];
            rec.extend(d.samples.iter().map(|s| real(*s)));
            put(rec);
        }
        for i in r.components.intersections.values() {
            put(vec![
                "intersection".into(),
                i.intersection_id.clone(),
                real(i.mu_s),
                real(i.sigma_s),
                i.n.to_string(),
                real(i.zero_fraction),
            ]);
        }
        if let Some(d) = &r.components.pooled_dwell {
            let mut rec = vec!["pooled_dwell".into(), d.samples.len().to_string()];
            rec.extend(d.samples.iter().map(|s| real(*s)));
            put(rec);
        }
        if let Some(i) = &r.components.pooled_intersection {
            put(vec![
                "pooled_intersection".into(),
                real(i.mu_s),
                real(i.sigma_s),
                i.n.to_string(),
                real(i.zero_fraction),
            ]);
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    pos: usize,
    err: &'a dyn Fn(String) -> IngestError,
}

impl<'a> Fields<'a> {
    fn next(&mut self) -> Result<&'a str, IngestError> {
        let v = self
            .rec
            .get(self.pos)
            .ok_or_else(|| (self.err)(format!("missing field {}", self.pos + 1)))?;
        self.pos += 1;
        Ok(v)
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, IngestError> {
        let v = self.next()?;
        v.parse().map_err(|_| (self.err)(format!("bad {what} `{v}`")))
    }

    fn coef(&mut self, present: bool) -> Result<f64, IngestError> {
        let v = self.next()?;
        match (v, present) {
            ("NA", false) => Ok(0.0),
            (_, true) => v.parse().map_err(|_| (self.err)(format!("bad coefficient `{v}`"))),
            _ => Err((self.err)(format!("masked coefficient must be NA, got `{v}`"))),
        }
    }

    fn reals(&mut self, count: usize, what: &str) -> Result<Vec<f64>, IngestError> {
        (0..count).map(|_| self.parse::<f64>(what)).collect()
    }

    fn finish(&self) -> Result<(), IngestError> {
        if self.pos != self.rec.len() {
            return Err((self.err)(format!("expected {} fields, found {}", self.pos, self.rec.len())));
        }
        Ok(())
    }
}

pub fn parse_store(text: &str, source: &str) -> Result<Vec<FittedRoute>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut routes: Vec<FittedRoute> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Parse {
            file: source.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| IngestError::Parse {
            file: source.into(),
            line,
            message,
        };
        let mut f = Fields {
            rec: &rec,
            pos: 0,
            err: &err,
        };
        let kind = f.next()?.to_string();
        if kind == "route" {
            let route_id = f.next()?.to_string();
            let direction_id = f.parse::<u8>("direction_id")?;
            f.finish()?;
            routes.push(FittedRoute {
                route_key: RouteKey::new(route_id, direction_id),
                ..FittedRoute::default()
            });
            continue;
        }
        let route = routes
            .last_mut()
            .ok_or_else(|| err(format!("`{kind}` record before any route record")))?;
        match kind.as_str() {
            "link" => {
                let index = f.parse::<usize>("link index")?;
                let n = f.parse::<usize>("n")?;
                let iterations = f.parse::<usize>("iterations")?;
                let loglik = f.parse::<f64>("loglik")?;
                let mask_text = f.next()?.to_string();
                if mask_text.len() != DESIGN_DIM || !mask_text.chars().all(|c| c == '0' || c == '1') {
                    return Err(err(format!("bad mask `{mask_text}`")));
                }
                let mut active_mask = [false; DESIGN_DIM];
                for (k, c) in mask_text.chars().enumerate() {
                    active_mask[k] = c == '1';
                }
                let mut beta = [0.0; DESIGN_DIM];
                for (k, b) in beta.iter_mut().enumerate() {
                    *b = f.coef(active_mask[k])?;
                }
                let mut gamma = [0.0; DESIGN_DIM];
                for (k, g) in gamma.iter_mut().enumerate() {
                    *g = f.coef(active_mask[k])?;
                }
                let fim = DMatrix::from_row_slice(PARAM_DIM, PARAM_DIM, &f.reals(PARAM_DIM * PARAM_DIM, "fim entry")?);
                f.finish()?;
                route.links.insert(
                    index,
                    HetLogNormalModel {
                        beta,
                        gamma,
                        fim,
                        n,
                        active_mask,
                        loglik,
                        iterations,
                    },
                );
            }
            "dwell" | "pooled_dwell" => {
                let stop_id = if kind == "dwell" { f.next()?.to_string() } else { POOLED_ID.to_string() };
                let count = f.parse::<usize>("count")?;
                let samples = f.reals(count, "dwell sample")?;
                f.finish()?;
                let d = EmpiricalDwell {
                    stop_id: stop_id.clone(),
                    mean: crate::stats::mean(&samples),
                    samples,
                };
                if kind == "dwell" {
                    route.components.dwell.insert(stop_id, d);
                } else {
                    route.components.pooled_dwell = Some(d);
                }
            }
            "intersection" | "pooled_intersection" => {
                let id = if kind == "intersection" { f.next()?.to_string() } else { POOLED_ID.to_string() };
                let m = IntersectionLogNormal {
                    intersection_id: id.clone(),
                    mu_s: f.parse("mu_s")?,
                    sigma_s: f.parse("sigma_s")?,
                    n: f.parse("n")?,
                    zero_fraction: f.parse("zero_fraction")?,
                };
                f.finish()?;
                if kind == "intersection" {
                    route.components.intersections.insert(id, m);
                } else {
                    route.components.pooled_intersection = Some(m);
                }
            }
            other => return Err(err(format!("unknown record type `{other}`"))),
        }
    }
    Ok(routes)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<Vec<FittedRoute>, IngestError> {
    let path = path.as_ref();
    parse_store(&read_table(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{fit_dwell, fit_intersection};
    use crate::hetlognorm::{fit, generate_synthetic, CovariateLaw, FitOptions};

    fn sample_route() -> FittedRoute {
        let law = CovariateLaw {
            probs: [0.0, 0.4, 0.7, 0.3],
        };
        let data = generate_synthetic(&[3.0, 0.0, 0.2, -0.1, 0.5], &[-2.0, 0.0, 0.3, 0.0, 0.8], 400, &law, 8);
        let m = fit(&data, &FitOptions::default()).unwrap();
        let mut components = ComponentSet::default();
        components
            .dwell
            .insert("S1".into(), fit_dwell("S1", &[0.0, 3.0, 17.5, 1.0 / 3.0], 1).unwrap());
        components.intersections.insert(
            "I,7".into(),
            fit_intersection("I,7", &[0.0, 12.0, 15.0, 31.0, 9.5], 1).unwrap(),
        );
        components.pooled_dwell = Some(fit_dwell(POOLED_ID, &[0.1, 0.2, 0.7], 1).unwrap());
        components.pooled_intersection = Some(fit_intersection(POOLED_ID, &[std::f64::consts::PI, 2.0], 1).unwrap());
        FittedRoute {
            route_key: RouteKey::new("12", 1),
            links: [(1, m.clone()), (3, m)].into(),
            components,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let routes = vec![sample_route(), FittedRoute { route_key: RouteKey::new("9", 0), ..sample_route() }];
        let text = write_store(&routes);
        let back = parse_store(&text, "mem").unwrap();
        assert_eq!(back, routes);
        assert_eq!(write_store(&back), text);
        assert!(text.contains(",NA,"));
    }

    #[test]
    fn rejects_orphan_and_unknown_records() {
        assert!(parse_store("link,1\n", "mem").is_err());
        assert!(matches!(
            parse_store("route,R,0\nbogus,1\n", "mem"),
            Err(IngestError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_value_for_masked_coefficient() {
        let text = write_store(&[sample_route()]).replacen(",NA,", ",0.0,", 1);
        assert!(parse_store(&text, "mem").is_err());
    }
}
