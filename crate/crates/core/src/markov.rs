//! Link-state Markov chain and Monte-Carlo remaining-time prediction.
//!
//! Each link is a state. Per time step ΔT the bus stays with probability
//! `(S−1)/S`, where `S` is the number of steps needed at the predicted speed,
//! so the step count on a link is `1 + Geometric(1/S)` with mean `S`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::components::{ComponentSet, EmpiricalDwell, IntersectionLogNormal};
use crate::geometry::{RouteModel, Zone};
use crate::hetlognorm::{predict_point, HetLogNormalModel};
use crate::inference::{build_covariates, space_mean_speed, CovariateConfig, CovariateVector, ProjectedPing};
use crate::ingest::{LookupError, WeatherTable};
use crate::stats::{mean, quantile_sorted};
use crate::Timestamp;

pub const DEFAULT_DELTA_T: f64 = 5.0;
pub const DEFAULT_RUNS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20231001;
/// Lower clamp on `S` so that the stay probability stays non-negative.
pub const MIN_STEPS: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-positive input: {0}")]
    NonpositiveInput(&'static str),
    #[error("time step {delta_t} s is not below the predicted road time {predicted:.3} s of link {link_index}")]
    DeltaTooLarge {
        link_index: usize,
        predicted: f64,
        delta_t: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no road-time model for link {0}")]
    MissingModel(usize),
    #[error("no fitted {kind} model for `{id}` and no pooled fallback")]
    MissingComponent { kind: &'static str, id: String },
    #[error("position {0:.1} m is not on any link")]
    OffRoute(f64),
    #[error(transparent)]
    Weather(#[from] LookupError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovConfig {
    pub delta_t: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            delta_t: DEFAULT_DELTA_T,
            runs: DEFAULT_RUNS,
            seed: DEFAULT_SEED,
        }
    }
}

impl MarkovConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.delta_t > 0.0) {
            return Err(SimError::InvalidConfig("delta_t must be positive"));
        }
        if self.runs == 0 {
            return Err(SimError::InvalidConfig("runs must be at least 1"));
        }
        Ok(())
    }
}

/// `S = remaining / (ΔT · speed)`, clamped below at [`MIN_STEPS`].
pub fn steps_to_complete(remaining_dist: f64, speed: f64, delta_t: f64) -> Result<f64, SimError> {
    if !(remaining_dist > 0.0) {
        return Err(SimError::NonpositiveInput("remaining distance"));
    }
    if !(speed > 0.0) {
        return Err(SimError::NonpositiveInput("speed"));
    }
    if !(delta_t > 0.0) {
        return Err(SimError::NonpositiveInput("delta_t"));
    }
    Ok((remaining_dist / (delta_t * speed)).max(MIN_STEPS))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRow {
    pub link_index: usize,
    pub steps: f64,
    pub p_stay: f64,
    pub p_advance: f64,
}

impl TransitionRow {
    pub fn from_steps(link_index: usize, steps: f64) -> Self {
        Self {
            link_index,
            steps,
            p_stay: (steps - 1.0) / steps,
            p_advance: 1.0 / steps,
        }
    }

    /// The state after the last link.
    pub fn absorbing(link_index: usize) -> Self {
        Self {
            link_index,
            steps: f64::INFINITY,
            p_stay: 1.0,
            p_advance: 0.0,
        }
    }

    pub fn is_absorbing(&self) -> bool {
        self.p_advance == 0.0
    }
}

/// Where a prediction starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Origin {
    pub link_index: usize,
    pub arc_pos: f64,
    pub timestamp: Timestamp,
}

impl Origin {
    pub fn locate(rm: &RouteModel, arc_pos: f64, timestamp: Timestamp) -> Result<Self, SimError> {
        let link_index = rm.link_at(arc_pos).ok_or(SimError::OffRoute(arc_pos))?;
        Ok(Self {
            link_index,
            arc_pos,
            timestamp,
        })
    }
}

/// Rows for the current and every downstream link, then the absorbing state.
///
/// The speed on each link is its length over the predicted road time at `x`.
/// Every full link must take longer than ΔT at that speed.
pub fn build_transition_rows(
    rm: &RouteModel,
    models: &BTreeMap<usize, HetLogNormalModel>,
    x: &CovariateVector,
    origin: &Origin,
    delta_t: f64,
) -> Result<Vec<TransitionRow>, SimError> {
    let mut rows = Vec::new();
    for link in rm.links.iter().filter(|l| l.index >= origin.link_index) {
        let model = models.get(&link.index).ok_or(SimError::MissingModel(link.index))?;
        let predicted = predict_point(model, x);
        if !(predicted > delta_t) {
            return Err(SimError::DeltaTooLarge {
                link_index: link.index,
                predicted,
                delta_t,
            });
        }
        let speed = link.length / predicted;
        let remaining = if link.index == origin.link_index {
            rm.stop_arc(link.index) - origin.arc_pos
        } else {
            link.length
        };
        rows.push(TransitionRow::from_steps(
            link.index,
            steps_to_complete(remaining, speed, delta_t)?,
        ));
    }
    rows.push(TransitionRow::absorbing(rm.links.len() + 1));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedLink {
    pub row: TransitionRow,
    pub stop_id: String,
    pub dwell: EmpiricalDwell,
    /// Intersections still ahead on this link.
    pub intersections: Vec<IntersectionLogNormal>,
}

/// Everything one simulation run needs, resolved up front.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub origin: Origin,
    pub covariates: CovariateVector,
    pub delta_t: f64,
    pub links: Vec<PlannedLink>,
}

pub fn build_plan(
    rm: &RouteModel,
    models: &BTreeMap<usize, HetLogNormalModel>,
    components: &ComponentSet,
    x: &CovariateVector,
    origin: &Origin,
    delta_t: f64,
) -> Result<SimulationPlan, SimError> {
    let rows = build_transition_rows(rm, models, x, origin, delta_t)?;
    let mut links = Vec::new();
    for row in rows.into_iter().filter(|r| !r.is_absorbing()) {
        let link = rm.link(row.link_index).expect("row for an existing link");
        let dwell = components
            .dwell_for(&link.to_stop)
            .ok_or_else(|| SimError::MissingComponent {
                kind: "dwell",
                id: link.to_stop.clone(),
            })?
            .clone();
        let intersections = link
            .intersections
            .iter()
            .map(|&j| &rm.intersections[j])
            .filter(|f| f.arc_pos > origin.arc_pos)
            .map(|f| {
                components
                    .intersection_for(&f.id)
                    .cloned()
                    .ok_or_else(|| SimError::MissingComponent {
                        kind: "intersection",
                        id: f.id.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        links.push(PlannedLink {
            row,
            stop_id: link.to_stop.clone(),
            dwell,
            intersections,
        });
    }
    Ok(SimulationPlan {
        origin: *origin,
        covariates: *x,
        delta_t,
        links,
    })
}

/// Step count on a link: one plus the failures before the first advance.
pub fn geometric_steps<R: Rng + ?Sized>(row: &TransitionRow, rng: &mut R) -> u64 {
    1 + Geometric::new(row.p_advance)
        .expect("advance probability in (0, 1]")
        .sample(rng)
}

/// Cumulative remaining time to the departure from each downstream stop.
pub fn simulate_once<R: Rng + ?Sized>(plan: &SimulationPlan, rng: &mut R) -> Vec<f64> {
    simulate_once_with(plan, rng, geometric_steps)
}

/// As [`simulate_once`] with a caller-supplied step-count draw.
pub fn simulate_once_with<R, F>(plan: &SimulationPlan, rng: &mut R, mut steps: F) -> Vec<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&TransitionRow, &mut R) -> u64,
{
    let mut elapsed = 0.0;
    plan.links
        .iter()
        .map(|l| {
            elapsed += steps(&l.row, rng) as f64 * plan.delta_t;
            for isec in &l.intersections {
                elapsed += isec.sample(rng);
            }
            elapsed += l.dwell.sample(rng);
            elapsed
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopSummary {
    pub stop_id: String,
    pub link_index: usize,
    pub mean_remaining: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub origin: Origin,
    pub covariates: CovariateVector,
    pub runs: usize,
    pub stops: Vec<StopSummary>,
}

/// The random stream for run `run`: independent of how runs are scheduled.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// All per-run offsets, `[run][stop]`.
pub fn simulate_runs(plan: &SimulationPlan, cfg: &MarkovConfig) -> Result<Vec<Vec<f64>>, SimError> {
    cfg.validate()?;
    Ok((0..cfg.runs)
        .map(|r| simulate_once(plan, &mut run_rng(cfg.seed, r)))
        .collect())
}

pub fn summarize(plan: &SimulationPlan, runs: &[Vec<f64>]) -> SimulationSummary {
    let stops = plan
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let mut col: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            StopSummary {
                stop_id: l.stop_id.clone(),
                link_index: l.row.link_index,
                mean_remaining: mean(&col),
                p2_5: quantile_sorted(&col, 0.025),
                p97_5: quantile_sorted(&col, 0.975),
            }
        })
        .collect();
    SimulationSummary {
        origin: plan.origin,
        covariates: plan.covariates,
        runs: runs.len(),
        stops,
    }
}

pub fn simulate(plan: &SimulationPlan, cfg: &MarkovConfig) -> Result<SimulationSummary, SimError> {
    Ok(summarize(plan, &simulate_runs(plan, cfg)?))
}

/// Plans and simulates from `origin` with covariates `x`.
pub fn predict_remaining(
    rm: &RouteModel,
    models: &BTreeMap<usize, HetLogNormalModel>,
    components: &ComponentSet,
    x: &CovariateVector,
    origin: &Origin,
    cfg: &MarkovConfig,
) -> Result<SimulationSummary, SimError> {
    cfg.validate()?;
    let plan = build_plan(rm, models, components, x, origin, cfg.delta_t)?;
    simulate(&plan, cfg)
}

/// Follows one vehicle and re-predicts whenever its traffic indicator flips.
///
/// The indicator starts at 0 and is driven by the latest open-road speed:
/// a pair of consecutive pings on open road on the same link with no feature
/// between them. It carries over across link changes.
#[derive(Debug, Clone)]
pub struct RealtimeSession<'a> {
    pub rm: &'a RouteModel,
    pub models: &'a BTreeMap<usize, HetLogNormalModel>,
    pub components: &'a ComponentSet,
    pub weather: &'a WeatherTable,
    pub covariate_cfg: CovariateConfig,
    pub markov_cfg: MarkovConfig,
    pub traffic: bool,
    last_ping: Option<ProjectedPing>,
}

impl<'a> RealtimeSession<'a> {
    pub fn new(
        rm: &'a RouteModel,
        models: &'a BTreeMap<usize, HetLogNormalModel>,
        components: &'a ComponentSet,
        weather: &'a WeatherTable,
        covariate_cfg: CovariateConfig,
        markov_cfg: MarkovConfig,
    ) -> Self {
        Self {
            rm,
            models,
            components,
            weather,
            covariate_cfg,
            markov_cfg,
            traffic: false,
            last_ping: None,
        }
    }

    /// Current covariates at `t` with the session's traffic indicator.
    pub fn covariates_at(&self, t: Timestamp) -> Result<CovariateVector, SimError> {
        Ok(build_covariates(t, self.weather, self.traffic, &self.covariate_cfg)?)
    }

    /// Prediction from `ping` with the current indicator, regardless of flips.
    pub fn predict_from(&self, ping: &ProjectedPing) -> Result<SimulationSummary, SimError> {
        let origin = Origin::locate(self.rm, ping.arc_pos, ping.timestamp)?;
        let x = self.covariates_at(ping.timestamp)?;
        predict_remaining(self.rm, self.models, self.components, &x, &origin, &self.markov_cfg)
    }

    /// The open-road speed between the previous ping and `ping`, if defined.
    fn open_road_speed(&self, ping: &ProjectedPing) -> Option<(usize, f64)> {
        let prev = self.last_ping?;
        let open = |p: &ProjectedPing| self.rm.feature_zone_test(p.arc_pos) == Zone::OpenRoad;
        let link = self.rm.link_at(ping.arc_pos)?;
        (ping.timestamp > prev.timestamp
            && open(&prev)
            && open(ping)
            && self.rm.link_at(prev.arc_pos) == Some(link)
            && self.rm.features_between(prev.arc_pos, ping.arc_pos).next().is_none())
        .then(|| (link, space_mean_speed(&prev, ping)))
    }

    /// Feeds one ping and updates the indicator; returns whether it flipped.
    pub fn observe(&mut self, ping: ProjectedPing) -> bool {
        let speed = self.open_road_speed(&ping);
        self.last_ping = Some(ping);
        let Some((link, v)) = speed else {
            return false;
        };
        let slow = v < self.covariate_cfg.threshold_for(link);
        let flipped = slow != self.traffic;
        self.traffic = slow;
        flipped
    }

    /// Feeds one ping; returns a fresh summary if the traffic indicator flipped.
    pub fn update_and_repredict(&mut self, ping: ProjectedPing) -> Result<Option<SimulationSummary>, SimError> {
        if !self.observe(ping) {
            return Ok(None);
        }
        self.predict_from(&ping).map(Some)
    }
}
