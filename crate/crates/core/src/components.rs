//! Stop dwell (empirical) and intersection (log-normal) time models.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::RouteModel;
use crate::inference::LinkObservation;
use crate::stats::{lognormal_mle, mean};

pub const MIN_COMPONENT_SAMPLES: usize = 10;
/// Id used for route-level pooled distributions.
pub const POOLED_ID: &str = "*";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComponentError {
    #[error("insufficient data: need {needed} samples, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("negative sample {0}")]
    NegativeSample(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDwell {
    pub stop_id: String,
    /// Ascending; zeros (skipped stops) included.
    pub samples: Vec<f64>,
    pub mean: f64,
}

pub fn fit_dwell(stop_id: &str, samples: &[f64], min_samples: usize) -> Result<EmpiricalDwell, ComponentError> {
    if let Some(&bad) = samples.iter().find(|&&s| s < 0.0) {
        return Err(ComponentError::NegativeSample(bad));
    }
    if samples.len() < min_samples.max(1) {
        return Err(ComponentError::InsufficientData {
            needed: min_samples.max(1),
            have: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalDwell {
        stop_id: stop_id.to_string(),
        mean: mean(&sorted),
        samples: sorted,
    })
}

impl EmpiricalDwell {
    /// Point prediction: the sample mean.
    pub fn predict(&self) -> f64 {
        self.mean
    }

    /// Bootstrap draw from the stored samples.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionLogNormal {
    pub intersection_id: String,
    pub mu_s: f64,
    pub sigma_s: f64,
    /// Positive samples used in the fit.
    pub n: usize,
    /// Share of input samples that were zero and left out.
    pub zero_fraction: f64,
}

/// Log-normal MLE over the positive entries of `samples`.
pub fn fit_intersection(
    intersection_id: &str,
    samples: &[f64],
    min_samples: usize,
) -> Result<IntersectionLogNormal, ComponentError> {
    if let Some(&bad) = samples.iter().find(|&&s| s < 0.0) {
        return Err(ComponentError::NegativeSample(bad));
    }
    let positive: Vec<f64> = samples.iter().copied().filter(|&s| s > 0.0).collect();
    if positive.len() < min_samples.max(1) {
        return Err(ComponentError::InsufficientData {
            needed: min_samples.max(1),
            have: positive.len(),
        });
    }
    let (mu_s, sigma_s) = lognormal_mle(&positive);
    Ok(IntersectionLogNormal {
        intersection_id: intersection_id.to_string(),
        mu_s,
        sigma_s,
        n: positive.len(),
        zero_fraction: (samples.len() - positive.len()) as f64 / samples.len() as f64,
    })
}

impl IntersectionLogNormal {
    /// The median, `exp(μ_s)`.
    pub fn predict(&self) -> f64 {
        self.mu_s.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        (self.mu_s + self.sigma_s * e).exp()
    }
}

/// Fitted dwell and intersection models for one route, with pooled
/// route-level fallbacks for sparsely observed features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentSet {
    pub dwell: BTreeMap<String, EmpiricalDwell>,
    pub intersections: BTreeMap<String, IntersectionLogNormal>,
    pub pooled_dwell: Option<EmpiricalDwell>,
    pub pooled_intersection: Option<IntersectionLogNormal>,
}

impl ComponentSet {
    pub fn fit(rm: &RouteModel, obs: &[LinkObservation], min_samples: usize) -> Self {
        let mut dwell_samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut isec_samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for o in obs.iter().filter(|o| o.route_key == rm.route_key) {
            let Some(link) = rm.link(o.link_index) else { continue };
            dwell_samples.entry(&link.to_stop).or_default().push(o.dwell as f64);
            for (id, s) in &o.intersection_times {
                isec_samples.entry(id).or_default().push(*s as f64);
            }
        }
        let all_dwell: Vec<f64> = dwell_samples.values().flatten().copied().collect();
        let all_isec: Vec<f64> = isec_samples.values().flatten().copied().collect();
        Self {
            dwell: dwell_samples
                .iter()
                .filter_map(|(id, s)| Some((id.to_string(), fit_dwell(id, s, min_samples).ok()?)))
                .collect(),
            intersections: isec_samples
                .iter()
                .filter_map(|(id, s)| Some((id.to_string(), fit_intersection(id, s, min_samples).ok()?)))
                .collect(),
            pooled_dwell: fit_dwell(POOLED_ID, &all_dwell, min_samples).ok(),
            pooled_intersection: fit_intersection(POOLED_ID, &all_isec, min_samples).ok(),
        }
    }

    pub fn dwell_for(&self, stop_id: &str) -> Option<&EmpiricalDwell> {
        self.dwell.get(stop_id).or(self.pooled_dwell.as_ref())
    }

    pub fn intersection_for(&self, id: &str) -> Option<&IntersectionLogNormal> {
        self.intersections.get(id).or(self.pooled_intersection.as_ref())
    }
}
