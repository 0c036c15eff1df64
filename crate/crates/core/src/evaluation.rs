//! Historical-mean and linear-regression baselines, accuracy metrics, and
//! the train/test comparison against the log-normal model.

use std::collections::BTreeMap;

use nalgebra::DVector;
use thiserror::Error;

use crate::hetlognorm::{self, modal_covariates, FitOptions, PredictionWithBounds, DEFAULT_LEVEL};
use crate::inference::{CovariateVector, LinkObservation};
use crate::ingest::RouteKey;
use crate::linalg::{active_columns, active_indices, design_matrix, ols, restrict, DesignRow, DESIGN_DIM};
use crate::stats::special::normal_quantile;
use crate::stats::{mean, quantile_sorted};
use crate::Timestamp;

pub const MIN_BASELINE_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {observed} observed vs {predicted} predicted")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("empty input")]
    Empty,
    #[error("empty split: no observations on or after the cut")]
    EmptySplit,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("insufficient data: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("rank-deficient design")]
    RankDeficient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoricalMean {
    pub mean: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    pub n: usize,
}

pub fn hm_fit(samples: &[f64]) -> Result<HistoricalMean, BaselineError> {
    if samples.len() < MIN_BASELINE_SAMPLES {
        return Err(BaselineError::InsufficientData {
            needed: MIN_BASELINE_SAMPLES,
            have: samples.len(),
        });
    }
    Ok(hm_fit_unchecked(samples))
}

fn hm_fit_unchecked(samples: &[f64]) -> HistoricalMean {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    HistoricalMean {
        mean: mean(&sorted),
        q2_5: quantile_sorted(&sorted, 0.025),
        q97_5: quantile_sorted(&sorted, 0.975),
        n: sorted.len(),
    }
}

pub fn hm_predict(m: &HistoricalMean) -> PredictionWithBounds {
    PredictionWithBounds {
        point: m.mean,
        lower: m.q2_5,
        upper: m.q97_5,
        level: DEFAULT_LEVEL,
    }
}

/// OLS on raw seconds with a constant error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaseline {
    /// Zero for masked columns.
    pub coefficients: [f64; DESIGN_DIM],
    pub active_mask: [bool; DESIGN_DIM],
    /// Unbiased: RSS / (n − q).
    pub residual_variance: f64,
    /// (ZᵀZ)⁻¹ over the active columns.
    pub gram_inverse: nalgebra::DMatrix<f64>,
    pub n: usize,
}

pub fn lr_fit(ys: &[f64], rows: &[DesignRow]) -> Result<LinearBaseline, BaselineError> {
    assert_eq!(ys.len(), rows.len(), "ys and design rows differ in length");
    let mask = active_columns(rows);
    let active = active_indices(&mask);
    let n = ys.len();
    if n <= active.len() {
        return Err(BaselineError::InsufficientData {
            needed: active.len() + 1,
            have: n,
        });
    }
    let z = design_matrix(rows, &active);
    let fit = ols(&z, &DVector::from_column_slice(ys)).ok_or(BaselineError::RankDeficient)?;
    let mut coefficients = [0.0; DESIGN_DIM];
    for (j, &k) in active.iter().enumerate() {
        coefficients[k] = fit.coefficients[j];
    }
    Ok(LinearBaseline {
        coefficients,
        active_mask: mask,
        residual_variance: fit.rss() / (n - active.len()) as f64,
        gram_inverse: fit.gram_inverse,
        n,
    })
}

/// Point `β̂ᵀa` with the mean-prediction interval `± z·√(s²·aᵀ(ZᵀZ)⁻¹a)`.
pub fn lr_predict(m: &LinearBaseline, x: &CovariateVector, level: f64) -> PredictionWithBounds {
    let active = active_indices(&m.active_mask);
    let a = restrict(&x.design_row(), &active);
    let point: f64 = active.iter().map(|&k| m.coefficients[k] * x.design_row()[k]).sum();
    let var = m.residual_variance * a.dot(&(&m.gram_inverse * &a));
    let half = normal_quantile(0.5 + level / 2.0) * var.max(0.0).sqrt();
    PredictionWithBounds {
        point,
        lower: point - half,
        upper: point + half,
        level,
    }
}

fn check_lengths(obs: &[f64], pred: &[f64]) -> Result<(), MetricError> {
    if obs.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            observed: obs.len(),
            predicted: pred.len(),
        });
    }
    if obs.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mae(obs: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_lengths(obs, pred)?;
    Ok(obs.iter().zip(pred).map(|(o, p)| (o - p).abs()).sum::<f64>() / obs.len() as f64)
}

pub fn rmse(obs: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_lengths(obs, pred)?;
    Ok((obs.iter().zip(pred).map(|(o, p)| (o - p).powi(2)).sum::<f64>() / obs.len() as f64).sqrt())
}

pub fn bound_width(b: &PredictionWithBounds) -> f64 {
    b.upper - b.lower
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub mae: f64,
    pub rmse: f64,
    /// Interval width at the modal training covariates.
    pub bound_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkComparison {
    pub route_key: RouteKey,
    pub link_index: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub modal: Option<CovariateVector>,
    /// `Err` carries the reason a model could not be scored.
    pub lognormal: Result<Scores, String>,
    pub historical: Result<Scores, String>,
    pub linear: Result<Scores, String>,
}

fn score_model(
    test: &[&LinkObservation],
    predict: impl Fn(&CovariateVector) -> f64,
    bounds: PredictionWithBounds,
) -> Result<Scores, String> {
    let obs: Vec<f64> = test.iter().map(|o| o.road as f64).collect();
    let pred: Vec<f64> = test.iter().map(|o| predict(&o.covariates)).collect();
    Ok(Scores {
        mae: mae(&obs, &pred).map_err(|e| e.to_string())?,
        rmse: rmse(&obs, &pred).map_err(|e| e.to_string())?,
        bound_width: bound_width(&bounds),
    })
}

/// Fits all three models per link on observations departing before `cut`
/// and scores road-time predictions on the rest.
pub fn evaluate_split(
    observations: &[LinkObservation],
    cut: Timestamp,
    fit_opts: &FitOptions,
) -> Result<Vec<LinkComparison>, MetricError> {
    let mut by_link: BTreeMap<(RouteKey, usize), (Vec<&LinkObservation>, Vec<&LinkObservation>)> = BTreeMap::new();
    for o in observations {
        let e = by_link.entry((o.route_key.clone(), o.link_index)).or_default();
        if o.depart_prev < cut {
            e.0.push(o);
        } else {
            e.1.push(o);
        }
    }
    if by_link.values().all(|(_, test)| test.is_empty()) {
        return Err(MetricError::EmptySplit);
    }
    let mut out = Vec::new();
    for ((route_key, link_index), (train, test)) in by_link {
        if test.is_empty() {
            continue;
        }
        let modal = modal_covariates(train.iter().map(|o| &o.covariates));
        let roads: Vec<f64> = train.iter().map(|o| o.road as f64).collect();
        let rows: Vec<DesignRow> = train.iter().map(|o| o.covariates.design_row()).collect();
        let Some(x0) = modal else {
            out.push(LinkComparison {
                route_key,
                link_index,
                n_train: 0,
                n_test: test.len(),
                modal,
                lognormal: Err("no training data".into()),
                historical: Err("no training data".into()),
                linear: Err("no training data".into()),
            });
            continue;
        };

        let lognormal = (|| {
            let data: Vec<(f64, CovariateVector)> = train.iter().map(|o| (o.log_road(), o.covariates)).collect();
            let m = hetlognorm::fit(&data, fit_opts).map_err(|e| e.to_string())?;
            let b = hetlognorm::predict_interval(&m, &x0, DEFAULT_LEVEL).map_err(|e| e.to_string())?;
            score_model(&test, |x| hetlognorm::predict_point(&m, x), b)
        })();
        let historical = (|| {
            let m = hm_fit(&roads).map_err(|e| e.to_string())?;
            score_model(&test, |_| m.mean, hm_predict(&m))
        })();
        let linear = (|| {
            if train.len() <= MIN_BASELINE_SAMPLES {
                return Err(BaselineError::InsufficientData {
                    needed: MIN_BASELINE_SAMPLES + 1,
                    have: train.len(),
                }
                .to_string());
            }
            let m = lr_fit(&roads, &rows).map_err(|e| e.to_string())?;
            score_model(&test, |x| lr_predict(&m, x, DEFAULT_LEVEL).point, lr_predict(&m, &x0, DEFAULT_LEVEL))
        })();
        out.push(LinkComparison {
            route_key,
            link_index,
            n_train: train.len(),
            n_test: test.len(),
            modal,
            lognormal,
            historical,
            linear,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hm_interpolated_quantiles() {
        let m = hm_fit_unchecked(&[10.0, 20.0, 30.0, 40.0]);
        let p = hm_predict(&m);
        assert_eq!(p.point, 25.0);
        assert_abs_diff_eq!(p.lower, 10.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.upper, 39.25, epsilon = 1e-12);
        let c = hm_predict(&hm_fit_unchecked(&[7.0; 4]));
        assert_eq!((c.lower, c.point, c.upper), (7.0, 7.0, 7.0));
    }

    #[test]
    fn hm_outlier_fixture() {
        // Position (4 − 1)·0.975 = 2.925 → 10 + 0.925·90.
        let m = hm_fit_unchecked(&[10.0, 10.0, 10.0, 100.0]);
        assert_eq!(m.mean, 32.5);
        assert_abs_diff_eq!(m.q97_5, 93.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.q2_5, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn hm_requires_samples() {
        assert!(matches!(hm_fit(&[1.0; 9]), Err(BaselineError::InsufficientData { .. })));
    }

    #[test]
    fn lr_exact_line_zero_width() {
        let rows: Vec<DesignRow> = (0..12).map(|i| [1.0, (i % 2) as f64, ((i / 2) % 2) as f64, 0.0, 0.0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| 30.0 + 5.0 * r[1] - 2.0 * r[2]).collect();
        let m = lr_fit(&ys, &rows).unwrap();
        let p = lr_predict(&m, &CovariateVector::from_bits([1, 1, 0, 0]), 0.95);
        assert_abs_diff_eq!(p.point, 33.0, epsilon = 1e-9);
        assert!(bound_width(&p) < 1e-6);
    }

    #[test]
    fn lr_intercept_only_closed_form() {
        let rows = vec![[1.0, 0.0, 0.0, 0.0, 0.0]; 3];
        let m = lr_fit(&[10.0, 20.0, 30.0], &rows).unwrap();
        assert_abs_diff_eq!(m.residual_variance, 100.0, epsilon = 1e-9);
        let p = lr_predict(&m, &CovariateVector::default(), 0.95);
        let half = 1.959963984540054 * (100.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(p.point, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.upper - p.point, half, epsilon = 1e-9);
        assert_abs_diff_eq!(p.point - p.lower, half, epsilon = 1e-9);
    }

    #[test]
    fn metric_values() {
        let o = [10.0, 20.0, 30.0];
        let p = [12.0, 18.0, 33.0];
        assert_abs_diff_eq!(mae(&o, &p).unwrap(), 7.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rmse(&o, &p).unwrap(), (17.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_eq!((mae(&o, &o).unwrap(), rmse(&o, &o).unwrap()), (0.0, 0.0));
        assert_eq!(
            mae(&o, &p[..2]),
            Err(MetricError::LengthMismatch {
                observed: 3,
                predicted: 2
            })
        );
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        let b = PredictionWithBounds {
            point: 27.5,
            lower: 26.436,
            upper: 28.601,
            level: 0.95,
        };
        assert_abs_diff_eq!(bound_width(&b), 2.165, epsilon = 1e-9);
    }

    fn obs(link: usize, t: Timestamp, road: i64, bits: [u8; 4]) -> LinkObservation {
        LinkObservation {
            route_key: RouteKey::new("R", 0),
            trip_id: format!("T{t}"),
            link_index: link,
            depart_prev: t,
            total: road,
            dwell: 0,
            road,
            intersection_times: vec![],
            covariates: CovariateVector::from_bits(bits),
            flags: Default::default(),
        }
    }

    #[test]
    fn split_contract() {
        let data: Vec<LinkObservation> = (0..100).map(|i| obs(1, i, 40 + (i % 7), [0, (i % 2) as u8, 0, 0])).collect();
        assert_eq!(evaluate_split(&data, 1000, &FitOptions::default()), Err(MetricError::EmptySplit));
        let r = evaluate_split(&data, 70, &FitOptions::default()).unwrap();
        assert_eq!((r[0].n_train, r[0].n_test), (70, 30));
        assert!(r[0].historical.is_ok() && r[0].linear.is_ok() && r[0].lognormal.is_ok());
    }

    #[test]
    fn degenerate_link_reported_as_gap() {
        let mut data: Vec<LinkObservation> = (0..100).map(|i| obs(1, i, 40 + (i % 7), [0, (i % 2) as u8, 0, 0])).collect();
        data.extend((0..100).map(|i| obs(2, i, 50, [0, 0, 0, 0])));
        let r = evaluate_split(&data, 70, &FitOptions::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[0].lognormal.is_ok());
        assert!(r[1].lognormal.is_err());
        assert!(r[1].historical.is_ok());
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (o, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (a, r) = (mae(&o, &p).unwrap(), rmse(&o, &p).unwrap());
            prop_assert!(a >= 0.0 && r >= a - 1e-9 * a.max(1.0));
        }

        #[test]
        fn hm_bounds_within_range(xs in prop::collection::vec(0.0f64..500.0, 10..60)) {
            let m = hm_fit(&xs).unwrap();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m.q2_5 && m.q2_5 <= m.q97_5 && m.q97_5 <= hi);
        }

        #[test]
        fn hm_widens_under_spread(xs in prop::collection::vec(10.0f64..100.0, 10..40), k in 1.0f64..3.0) {
            let c = mean(&xs);
            let spread: Vec<f64> = xs.iter().map(|x| c + k * (x - c)).collect();
            let a = hm_predict(&hm_fit(&xs).unwrap());
            let b = hm_predict(&hm_fit(&spread).unwrap());
            prop_assert!(bound_width(&b) >= bound_width(&a) - 1e-9);
        }
    }
}
