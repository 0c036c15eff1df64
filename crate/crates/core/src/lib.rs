//! Bus link travel-time modelling from GTFS static and real-time position data.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] reads GTFS tables, vehicle-position records, hourly weather
//!    and intersection lists.
//! 2. [`geometry`] projects stops, intersections and pings onto the route's
//!    arc-length axis; [`inference`] turns projected ping streams into
//!    buffer-zone events and splits each link traversal into road, dwell and
//!    intersection time.
//! 3. [`hetlognorm`] fits a per-link log-normal road-time model whose log-mean
//!    and log-variance are both linear in binary covariates, with
//!    Fisher-information confidence intervals; [`components`] models dwell
//!    (empirical) and intersection (log-normal) time.
//! 4. [`markov`] turns predicted link speeds into stay/advance probabilities
//!    and simulates remaining time to every downstream stop.
//!
//! [`stats`] holds the goodness-of-fit, heteroscedasticity and independence
//! tests; [`evaluation`] the historical-mean and linear-regression baselines.

pub mod calendar;
pub mod components;
pub mod evaluation;
pub mod geometry;
pub mod hetlognorm;
pub mod inference;
pub mod ingest;
pub mod linalg;
pub mod markov;
pub mod stats;
pub mod store;
pub mod synth;

pub use calendar::LocalClock;
pub use components::{ComponentSet, EmpiricalDwell, IntersectionLogNormal};
pub use geometry::{LatLon, Polyline, RouteModel, Zone};
pub use hetlognorm::{HetLogNormalModel, PredictionWithBounds};
pub use inference::{CovariateVector, LinkObservation};
pub use ingest::{IntersectionSet, PingSeries, RouteKey, StaticNetwork, WeatherTable};
pub use markov::{MarkovConfig, SimulationSummary};

/// Integer POSIX seconds, UTC.
pub type Timestamp = i64;
