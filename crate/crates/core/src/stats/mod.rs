//! Assumption checks for the time components: Kolmogorov–Smirnov against a
//! fitted log-normal, Breusch–Pagan for heteroscedasticity, Wald–Wolfowitz
//! runs for independence. Plus the shared quantile rule.

pub mod special;

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::linalg::{active_columns, active_indices, design_matrix, ols, DesignRow};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("non-positive sample {0}")]
    NonpositiveSample(f64),
    #[error("insufficient data: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("rank-deficient design")]
    RankDeficient,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Retain,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Reject => "reject",
            Decision::Retain => "retain",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test_name: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub decision_at_0_05: Decision,
}

impl TestResult {
    fn new(test_name: &'static str, statistic: f64, p_value: f64, n: usize) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test_name,
            statistic,
            p_value,
            n,
            decision_at_0_05: if p_value < ALPHA { Decision::Reject } else { Decision::Retain },
        }
    }
}

/// Linear interpolation between order statistics at position (n−1)·q.
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Log-moment MLE (μ, σ) of a log-normal sample; σ is the population
/// standard deviation of the logs.
pub fn lognormal_mle(samples: &[f64]) -> (f64, f64) {
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let mu = mean(&logs);
    let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / logs.len() as f64;
    (mu, var.sqrt())
}

/// sup |F_n − F| for a sample against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub const KS_MIN_SAMPLES: usize = 20;

/// Kolmogorov–Smirnov test of a positive sample against the log-normal fitted
/// to that same sample. The p-value is the asymptotic Kolmogorov tail at
/// √n·D, which is conservative when parameters are estimated.
pub fn ks_lognormal(samples: &[f64]) -> Result<TestResult, StatError> {
    if let Some(&bad) = samples.iter().find(|&&x| !(x > 0.0)) {
        return Err(StatError::NonpositiveSample(bad));
    }
    if samples.len() < KS_MIN_SAMPLES {
        return Err(StatError::InsufficientData {
            needed: KS_MIN_SAMPLES,
            have: samples.len(),
        });
    }
    let (mu, sigma) = lognormal_mle(samples);
    if !(sigma > 0.0) {
        return Err(StatError::Degenerate("zero log-variance"));
    }
    let d = ks_statistic(samples, |x| special::normal_cdf((x.ln() - mu) / sigma));
    let n = samples.len();
    Ok(TestResult::new(
        "kolmogorov-smirnov",
        d,
        special::kolmogorov_sf((n as f64).sqrt() * d),
        n,
    ))
}

/// Breusch–Pagan LM test: n·R² from regressing squared OLS residuals on the
/// design, referred to χ² with one degree of freedom per varying covariate.
pub fn breusch_pagan(ys: &[f64], rows: &[DesignRow]) -> Result<TestResult, StatError> {
    assert_eq!(ys.len(), rows.len(), "ys and design rows differ in length");
    let n = ys.len();
    let active = active_indices(&active_columns(rows));
    let q = active.len();
    if n <= 10 * q {
        return Err(StatError::InsufficientData {
            needed: 10 * q + 1,
            have: n,
        });
    }
    if q < 2 {
        return Err(StatError::Degenerate("no covariate varies"));
    }
    let z = design_matrix(rows, &active);
    let y = DVector::from_column_slice(ys);
    let fit = ols(&z, &y).ok_or(StatError::RankDeficient)?;
    let e2 = fit.residuals.map(|e| e * e);
    let e2_mean = e2.mean();
    let tss = e2.iter().map(|v| (v - e2_mean) * (v - e2_mean)).sum::<f64>();
    let r2 = if tss <= 1e-20 * n as f64 * e2_mean * e2_mean {
        0.0
    } else {
        let aux = ols(&z, &e2).ok_or(StatError::RankDeficient)?;
        (1.0 - aux.rss() / tss).clamp(0.0, 1.0)
    };
    let lm = n as f64 * r2;
    Ok(TestResult::new(
        "breusch-pagan",
        lm,
        special::chi_square_sf(lm, (q - 1) as f64),
        n,
    ))
}

pub const RUNS_MIN_SAMPLES: usize = 20;

/// Wald–Wolfowitz runs test above/below the median, normal approximation
/// without continuity correction. Values equal to the median are dropped.
pub fn runs_test(sequence: &[f64]) -> Result<TestResult, StatError> {
    if sequence.len() < RUNS_MIN_SAMPLES {
        return Err(StatError::InsufficientData {
            needed: RUNS_MIN_SAMPLES,
            have: sequence.len(),
        });
    }
    let mut sorted = sequence.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let signs: Vec<bool> = sequence.iter().filter(|&&x| x != median).map(|&x| x > median).collect();
    let n1 = signs.iter().filter(|&&s| s).count() as f64;
    let n2 = signs.len() as f64 - n1;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(StatError::Degenerate("all values on one side of the median"));
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let total = n1 + n2;
    let mu = 2.0 * n1 * n2 / total + 1.0;
    let var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n1 - n2) / (total * total * (total - 1.0));
    if !(var > 0.0) {
        return Err(StatError::Degenerate("zero runs variance"));
    }
    let z = (runs as f64 - mu) / var.sqrt();
    Ok(TestResult::new("runs", z, 2.0 * special::normal_sf(z.abs()), signs.len()))
}

/// Number of runs for a sequence, for reporting alongside the Z statistic.
pub fn count_runs(sequence: &[f64]) -> usize {
    let mut sorted = sequence.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let signs: Vec<bool> = sequence.iter().filter(|&&x| x != median).map(|&x| x > median).collect();
    if signs.is_empty() {
        0
    } else {
        1 + signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}
