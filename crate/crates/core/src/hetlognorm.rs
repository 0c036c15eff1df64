//! Per-link heteroscedastic log-normal road-time model.
//!
//! `ln Δt_r ~ N(βᵀz, exp(γᵀz))` with `z = [1, rain, peak, weekday, traffic]`.
//! Fitted by Fisher scoring from an OLS start. The Fisher information is
//! block diagonal, so the β and γ updates decouple.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::inference::CovariateVector;
use crate::linalg::{active_columns, active_indices, cholesky, design_matrix, ols, restrict, DesignRow, DESIGN_DIM};
use crate::stats::special::normal_quantile;

/// Total parameter count: β and γ blocks.
pub const PARAM_DIM: usize = 2 * DESIGN_DIM;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// `γᵀz` below this means the variance has collapsed.
pub const LOG_VARIANCE_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("insufficient data: need {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("singular design: active covariates are not linearly independent")]
    SingularDesign,
    #[error("degenerate variance: log-variance fell below {LOG_VARIANCE_FLOOR}")]
    DegenerateVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NumericalError {
    #[error("Fisher information is singular")]
    SingularFim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub min_samples: usize,
    pub max_iterations: usize,
    /// Converged when max |score| / n falls to this.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_samples: 30,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HetLogNormalModel {
    /// Entries for masked columns are zero and carry no information.
    pub beta: [f64; DESIGN_DIM],
    pub gamma: [f64; DESIGN_DIM],
    /// Total information, 10×10, β block first; masked rows and columns are zero.
    pub fim: DMatrix<f64>,
    pub n: usize,
    pub active_mask: [bool; DESIGN_DIM],
    pub loglik: f64,
    pub iterations: usize,
}

impl HetLogNormalModel {
    /// β_k, or `None` when column k was masked out of the design.
    pub fn beta_coef(&self, k: usize) -> Option<f64> {
        self.active_mask[k].then_some(self.beta[k])
    }

    pub fn gamma_coef(&self, k: usize) -> Option<f64> {
        self.active_mask[k].then_some(self.gamma[k])
    }

    /// Log-scale mean `β̂ᵀz` with masked covariates contributing zero.
    pub fn log_mean(&self, x: &CovariateVector) -> f64 {
        masked_dot(&self.beta, &self.active_mask, &x.design_row())
    }

    pub fn log_variance(&self, x: &CovariateVector) -> f64 {
        masked_dot(&self.gamma, &self.active_mask, &x.design_row())
    }

    fn active(&self) -> Vec<usize> {
        active_indices(&self.active_mask)
    }
}

fn masked_dot(coef: &[f64; DESIGN_DIM], mask: &[bool; DESIGN_DIM], z: &DesignRow) -> f64 {
    (0..DESIGN_DIM).filter(|&k| mask[k]).map(|k| coef[k] * z[k]).sum()
}

fn dot(a: &[f64], z: &DesignRow) -> f64 {
    a.iter().zip(z).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionWithBounds {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

pub fn log_likelihood(beta: &[f64], gamma: &[f64], ys: &[f64], z: &[DesignRow]) -> f64 {
    let n = ys.len() as f64;
    let mut ll = -0.5 * n * (2.0 * std::f64::consts::PI).ln();
    for (y, row) in ys.iter().zip(z) {
        let eta = dot(gamma, row);
        let r = y - dot(beta, row);
        ll -= 0.5 * eta + r * r / (2.0 * eta.exp());
    }
    ll
}

/// Gradient of [`log_likelihood`]: β block then γ block.
pub fn score(beta: &[f64], gamma: &[f64], ys: &[f64], z: &[DesignRow]) -> [f64; PARAM_DIM] {
    let mut s = [0.0; PARAM_DIM];
    for (y, row) in ys.iter().zip(z) {
        let var = dot(gamma, row).exp();
        let r = y - dot(beta, row);
        let wb = r / var;
        let wg = -0.5 + r * r / (2.0 * var);
        for k in 0..DESIGN_DIM {
            s[k] += row[k] * wb;
            s[DESIGN_DIM + k] += row[k] * wg;
        }
    }
    s
}

/// Expected information at γ: `I_ββ = ZᵀSZ` with `S = diag(1/σ²)`,
/// `I_γγ = ½ZᵀZ`, cross block zero.
pub fn fisher_information(gamma: &[f64], z: &[DesignRow]) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(PARAM_DIM, PARAM_DIM);
    for row in z {
        let w = (-dot(gamma, row)).exp();
        for a in 0..DESIGN_DIM {
            for b in 0..DESIGN_DIM {
                let zz = row[a] * row[b];
                f[(a, b)] += w * zz;
                f[(DESIGN_DIM + a, DESIGN_DIM + b)] += 0.5 * zz;
            }
        }
    }
    f
}

/// Reduced-coordinate state over the active columns.
struct Fitter<'a> {
    z: DMatrix<f64>,
    y: &'a DVector<f64>,
}

impl Fitter<'_> {
    fn eta(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.z * gamma
    }

    fn loglik(&self, beta: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
        let n = self.y.len() as f64;
        let eta = self.eta(gamma);
        let r = self.y - &self.z * beta;
        let mut ll = -0.5 * n * (2.0 * std::f64::consts::PI).ln();
        for m in 0..r.len() {
            ll -= 0.5 * eta[m] + r[m] * r[m] / (2.0 * eta[m].exp());
        }
        ll
    }
}

/// Maximum-likelihood fit for one link from `(ln Δt_r, covariates)` pairs.
pub fn fit(data: &[(f64, CovariateVector)], opts: &FitOptions) -> Result<HetLogNormalModel, FitError> {
    let n = data.len();
    if n < opts.min_samples {
        return Err(FitError::InsufficientData {
            needed: opts.min_samples,
            have: n,
        });
    }
    let rows: Vec<DesignRow> = data.iter().map(|(_, x)| x.design_row()).collect();
    let mask = active_columns(&rows);
    let active = active_indices(&mask);
    let q = active.len();
    if n <= q {
        return Err(FitError::InsufficientData { needed: q + 1, have: n });
    }
    let z = design_matrix(&rows, &active);
    let y = DVector::from_iterator(n, data.iter().map(|(y, _)| *y));
    let start = ols(&z, &y).ok_or(FitError::SingularDesign)?;
    let mean_sq = start.rss() / n as f64;
    if !(mean_sq > 0.0) || mean_sq.ln() < LOG_VARIANCE_FLOOR {
        return Err(FitError::DegenerateVariance);
    }
    let gram_gamma = (z.transpose() * &z) * 0.5;
    let chol_gamma = cholesky(&gram_gamma).ok_or(FitError::SingularDesign)?;

    let fitter = Fitter { z, y: &y };
    let mut beta = start.coefficients;
    let mut gamma = DVector::zeros(q);
    gamma[0] = mean_sq.ln();
    let mut ll = fitter.loglik(&beta, &gamma);
    let nf = n as f64;

    let mut converged_at = None;
    for it in 0..opts.max_iterations {
        let eta = fitter.eta(&gamma);
        if eta.min() < LOG_VARIANCE_FLOOR {
            return Err(FitError::DegenerateVariance);
        }
        let w = eta.map(|e| (-e).exp());
        let r = &y - &fitter.z * &beta;
        let s_beta = fitter.z.transpose() * r.component_mul(&w);
        let s_gamma = fitter.z.transpose() * r.zip_map(&w, |ri, wi| -0.5 + 0.5 * ri * ri * wi);
        let scaled = s_beta.amax().max(s_gamma.amax()) / nf;
        if scaled <= opts.tolerance {
            converged_at = Some(it);
            break;
        }
        let zw = DMatrix::from_fn(n, q, |m, j| fitter.z[(m, j)] * w[m]);
        let info_beta = fitter.z.transpose() * zw;
        let chol_beta = cholesky(&info_beta).ok_or(FitError::SingularDesign)?;
        let d_beta = chol_beta.solve(&s_beta);
        let d_gamma = chol_gamma.solve(&s_gamma);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let b = &beta + &d_beta * step;
            let g = &gamma + &d_gamma * step;
            let cand = fitter.loglik(&b, &g);
            if cand.is_finite() && cand >= ll {
                beta = b;
                gamma = g;
                ll = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(FitError::NoConvergence { iterations: it + 1 });
        }
    }
    let iterations = converged_at.ok_or(FitError::NoConvergence {
        iterations: opts.max_iterations,
    })?;

    let mut beta_full = [0.0; DESIGN_DIM];
    let mut gamma_full = [0.0; DESIGN_DIM];
    for (j, &k) in active.iter().enumerate() {
        beta_full[k] = beta[j];
        gamma_full[k] = gamma[j];
    }
    let mut fim = fisher_information(&gamma_full, &rows);
    for k in 0..DESIGN_DIM {
        if !mask[k] {
            for idx in [k, DESIGN_DIM + k] {
                fim.row_mut(idx).fill(0.0);
                fim.column_mut(idx).fill(0.0);
            }
        }
    }
    Ok(HetLogNormalModel {
        beta: beta_full,
        gamma: gamma_full,
        fim,
        n,
        active_mask: mask,
        loglik: ll,
        iterations,
    })
}

/// Predicted median road time `exp(β̂ᵀz)` in seconds.
pub fn predict_point(model: &HetLogNormalModel, x: &CovariateVector) -> f64 {
    model.log_mean(x).exp()
}

/// Standard error of `β̂ᵀz` from the inverse total information.
pub fn log_mean_sd(model: &HetLogNormalModel, x: &CovariateVector) -> Result<f64, NumericalError> {
    let active = model.active();
    let info = DMatrix::from_fn(active.len(), active.len(), |i, j| model.fim[(active[i], active[j])]);
    let chol = cholesky(&info).ok_or(NumericalError::SingularFim)?;
    let a = restrict(&x.design_row(), &active);
    let var = a.dot(&chol.solve(&a));
    Ok(var.max(0.0).sqrt())
}

/// `exp(μ ∓ z·sd)` around `exp(μ)` at two-sided `level`.
pub fn interval_from_log(mu: f64, sd: f64, level: f64) -> PredictionWithBounds {
    let z = normal_quantile(0.5 + level / 2.0);
    PredictionWithBounds {
        point: mu.exp(),
        lower: (mu - z * sd).exp(),
        upper: (mu + z * sd).exp(),
        level,
    }
}

pub fn predict_interval(
    model: &HetLogNormalModel,
    x: &CovariateVector,
    level: f64,
) -> Result<PredictionWithBounds, NumericalError> {
    Ok(interval_from_log(model.log_mean(x), log_mean_sd(model, x)?, level))
}

/// Success probabilities for the four binary covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateLaw {
    pub probs: [f64; 4],
}

impl Default for CovariateLaw {
    fn default() -> Self {
        Self { probs: [0.5; 4] }
    }
}

impl CovariateLaw {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> CovariateVector {
        let b = self.probs.map(|p| u8::from(rng.random_bool(p)));
        CovariateVector::from_bits(b)
    }
}

/// `n` draws of `(y, x)` with `y ~ N(βᵀz, exp(γᵀz))`.
pub fn generate_synthetic(
    beta: &[f64; DESIGN_DIM],
    gamma: &[f64; DESIGN_DIM],
    n: usize,
    law: &CovariateLaw,
    seed: u64,
) -> Vec<(f64, CovariateVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = law.sample(&mut rng);
            let z = x.design_row();
            let e: f64 = rng.sample(StandardNormal);
            (dot(beta, &z) + (0.5 * dot(gamma, &z)).exp() * e, x)
        })
        .collect()
}

/// Most frequent covariate combination; ties go to the smallest in bit order.
pub fn modal_covariates<'a>(xs: impl IntoIterator<Item = &'a CovariateVector>) -> Option<CovariateVector> {
    let mut counts: BTreeMap<CovariateVector, usize> = BTreeMap::new();
    for x in xs {
        *counts.entry(*x).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(CovariateVector, usize)>, (x, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((x, c)),
        })
        .map(|(x, _)| x)
}
