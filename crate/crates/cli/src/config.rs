//! Run configuration: a `key = value` file overridden by command-line flags.
//!
//! ```text
//! # comment
//! gtfs = data/gtfs
//! pings = data/pings.csv
//! peak_hours = 7,8,16,17
//! speed_threshold = 5
//! ```
//!
//! Keys are the long flag names with `_` for `-`. Unknown keys are an error.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use linktime::calendar::{LocalClock, DEFAULT_TZ_OFFSET_HOURS};
use linktime::geometry::DEFAULT_BUFFER_RADIUS_M;
use linktime::hetlognorm::FitOptions;
use linktime::inference::{CovariateConfig, DEFAULT_MAX_PING_OFFSET_M, DEFAULT_PEAK_HOURS, DEFAULT_SPEED_THRESHOLD};
use linktime::ingest::{PingOptions, RainLabels, RouteKey};
use linktime::markov::{MarkovConfig, DEFAULT_DELTA_T, DEFAULT_RUNS, DEFAULT_SEED};
use linktime::Timestamp;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Key-value config file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print JSON instead of CSV and write JSON mirrors of output tables
    #[arg(long, global = true)]
    pub json: bool,

    /// GTFS static feed directory
    #[arg(long, global = true)]
    pub gtfs: Option<PathBuf>,
    /// Position pings (trip_id,vehicle_id,timestamp,lat,lon)
    #[arg(long, global = true)]
    pub pings: Option<PathBuf>,
    /// Hourly weather (date,hour,condition)
    #[arg(long, global = true)]
    pub weather: Option<PathBuf>,
    /// Intersection points (intersection_id,lat,lon)
    #[arg(long, global = true)]
    pub intersections: Option<PathBuf>,
    /// Link observation file [default: <out>/observations.csv]
    #[arg(long, global = true)]
    pub observations: Option<PathBuf>,
    /// Model store [default: <out>/models.txt]
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Restrict to one route, as route_id/direction_id
    #[arg(long, global = true)]
    pub route: Option<String>,

    /// Local time offset from UTC in hours
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tz_offset: Option<i32>,
    /// Buffer zone radius in metres
    #[arg(long, global = true)]
    pub buffer_radius: Option<f64>,
    /// Traffic speed threshold V in m/s
    #[arg(long, global = true)]
    pub speed_threshold: Option<f64>,
    /// Peak hours, comma-separated local hours
    #[arg(long, global = true)]
    pub peak_hours: Option<String>,
    /// Weather conditions counted as rain, comma-separated
    #[arg(long, global = true)]
    pub rain_labels: Option<String>,
    /// Pings further than this from the route are ignored (m)
    #[arg(long, global = true)]
    pub max_ping_offset: Option<f64>,
    /// Gap in seconds that splits a trip's pings into segments
    #[arg(long, global = true)]
    pub max_gap: Option<i64>,
    /// Minimum observations per link model
    #[arg(long, global = true)]
    pub min_samples: Option<usize>,
    /// Minimum samples for a per-feature dwell or intersection model
    #[arg(long, global = true)]
    pub component_min_samples: Option<usize>,
    /// Markov time step in seconds
    #[arg(long, global = true)]
    pub delta_t: Option<f64>,
    /// Monte-Carlo runs
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Train/test cut: YYYY-MM-DD (local midnight) or a Unix timestamp
    #[arg(long, global = true)]
    pub cut: Option<String>,
}

fn parse_config_text(text: &str, source: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("{} line {}: expected key = value", source.display(), k + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str, slot: &mut Option<T>) -> Result<(), CliError> {
    if let Some(v) = map.remove(key) {
        if slot.is_none() {
            *slot = Some(v.parse().map_err(|_| CliError::input(format!("config: bad value `{v}` for {key}")))?);
        }
    }
    Ok(())
}

impl Settings {
    /// Fills unset fields from the config file, if one was given.
    pub fn with_config_file(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = parse_config_text(&text, &path)?;
        take(&mut map, "out", &mut self.out)?;
        take(&mut map, "seed", &mut self.seed)?;
        take(&mut map, "gtfs", &mut self.gtfs)?;
        take(&mut map, "pings", &mut self.pings)?;
        take(&mut map, "weather", &mut self.weather)?;
        take(&mut map, "intersections", &mut self.intersections)?;
        take(&mut map, "observations", &mut self.observations)?;
        take(&mut map, "store", &mut self.store)?;
        take(&mut map, "route", &mut self.route)?;
        take(&mut map, "tz_offset", &mut self.tz_offset)?;
        take(&mut map, "buffer_radius", &mut self.buffer_radius)?;
        take(&mut map, "speed_threshold", &mut self.speed_threshold)?;
        take(&mut map, "peak_hours", &mut self.peak_hours)?;
        take(&mut map, "rain_labels", &mut self.rain_labels)?;
        take(&mut map, "max_ping_offset", &mut self.max_ping_offset)?;
        take(&mut map, "max_gap", &mut self.max_gap)?;
        take(&mut map, "min_samples", &mut self.min_samples)?;
        take(&mut map, "component_min_samples", &mut self.component_min_samples)?;
        take(&mut map, "delta_t", &mut self.delta_t)?;
        take(&mut map, "runs", &mut self.runs)?;
        take(&mut map, "cut", &mut self.cut)?;
        if let Some(key) = map.keys().next() {
            return Err(CliError::input(format!("config: unknown key `{key}`")));
        }
        Ok(self)
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::input(format!("{name} must be positive, got {v}")))
            }
        };
        let out = self.out.unwrap_or_else(|| PathBuf::from("out"));
        let peak_hours = match &self.peak_hours {
            Some(s) => s
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| match p.parse::<u32>() {
                    Ok(h) if h < 24 => Ok(h),
                    _ => Err(CliError::input(format!("bad peak hour `{p}`"))),
                })
                .collect::<Result<BTreeSet<u32>, _>>()?,
            None => DEFAULT_PEAK_HOURS.into_iter().collect(),
        };
        let rain_labels = match &self.rain_labels {
            Some(s) => RainLabels::new(s.split(',').map(str::trim).filter(|p| !p.is_empty())),
            None => RainLabels::default(),
        };
        let route = self.route.as_deref().map(parse_route_key).transpose()?;
        let clock = LocalClock::new(self.tz_offset.unwrap_or(DEFAULT_TZ_OFFSET_HOURS));
        let cut = self.cut.as_deref().map(|c| parse_cut(c, &clock)).transpose()?;
        let runs = self.runs.unwrap_or(DEFAULT_RUNS);
        if runs == 0 {
            return Err(CliError::input("runs must be positive"));
        }
        Ok(RunConfig {
            observations: self.observations.unwrap_or_else(|| out.join("observations.csv")),
            store: self.store.unwrap_or_else(|| out.join("models.txt")),
            out,
            json: self.json,
            gtfs: self.gtfs,
            pings: self.pings,
            weather: self.weather,
            intersections: self.intersections,
            route,
            clock,
            buffer_radius: positive("buffer_radius", self.buffer_radius.unwrap_or(DEFAULT_BUFFER_RADIUS_M))?,
            covariates: CovariateConfig {
                clock,
                peak_hours,
                rain_labels,
                speed_threshold: positive("speed_threshold", self.speed_threshold.unwrap_or(DEFAULT_SPEED_THRESHOLD))?,
                link_thresholds: BTreeMap::new(),
                max_ping_offset: positive("max_ping_offset", self.max_ping_offset.unwrap_or(DEFAULT_MAX_PING_OFFSET_M))?,
            },
            ping_options: PingOptions {
                max_gap: self.max_gap.unwrap_or(PingOptions::default().max_gap),
                clock,
            },
            fit_options: FitOptions {
                min_samples: self.min_samples.unwrap_or(FitOptions::default().min_samples),
                ..FitOptions::default()
            },
            component_min_samples: self
                .component_min_samples
                .unwrap_or(linktime::components::MIN_COMPONENT_SAMPLES),
            markov: MarkovConfig {
                delta_t: positive("delta_t", self.delta_t.unwrap_or(DEFAULT_DELTA_T))?,
                runs,
                seed: self.seed.unwrap_or(DEFAULT_SEED),
            },
            seed: self.seed,
            cut,
        })
    }
}

pub fn parse_route_key(s: &str) -> Result<RouteKey, CliError> {
    let (id, dir) = s.rsplit_once('/').unwrap_or((s, "0"));
    let dir = dir
        .parse::<u8>()
        .map_err(|_| CliError::input(format!("bad route `{s}`; expected route_id/direction_id")))?;
    Ok(RouteKey::new(id, dir))
}

fn parse_cut(s: &str, clock: &LocalClock) -> Result<Timestamp, CliError> {
    if let Ok(t) = s.parse::<Timestamp>() {
        return Ok(t);
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| clock.local_midnight(d))
        .map_err(|_| CliError::input(format!("bad cut `{s}`; expected YYYY-MM-DD or a timestamp")))
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub json: bool,
    pub gtfs: Option<PathBuf>,
    pub pings: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub intersections: Option<PathBuf>,
    pub observations: PathBuf,
    pub store: PathBuf,
    pub route: Option<RouteKey>,
    pub clock: LocalClock,
    pub buffer_radius: f64,
    pub covariates: CovariateConfig,
    pub ping_options: PingOptions,
    pub fit_options: FitOptions,
    pub component_min_samples: usize,
    pub markov: MarkovConfig,
    /// The explicitly requested seed, if any.
    pub seed: Option<u64>,
    pub cut: Option<Timestamp>,
}

impl RunConfig {
    /// A required input path that must exist.
    pub fn input<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        let p = path
            .as_deref()
            .ok_or_else(|| CliError::input(format!("missing --{flag}")))?;
        Self::existing(p)
    }

    pub fn existing(p: &Path) -> Result<&Path, CliError> {
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::input(format!("{} does not exist", p.display())))
        }
    }

    pub fn wants_route(&self, key: &RouteKey) -> bool {
        self.route.as_ref().is_none_or(|r| r == key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# test\nspeed_threshold = 4\nruns = 50 # inline\npeak_hours = 7, 8\n").unwrap();
        let s = Settings {
            config: Some(path),
            runs: Some(10),
            ..Settings::default()
        };
        let cfg = s.with_config_file().unwrap().resolve().unwrap();
        assert_eq!(cfg.markov.runs, 10);
        assert_eq!(cfg.covariates.speed_threshold, 4.0);
        assert_eq!(cfg.covariates.peak_hours, [7, 8].into());
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "speed = 4\n").unwrap();
        let s = Settings {
            config: Some(path),
            ..Settings::default()
        };
        assert_eq!(s.with_config_file().unwrap_err().code, 2);
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        for s in [
            Settings { delta_t: Some(0.0), ..Settings::default() },
            Settings { speed_threshold: Some(-1.0), ..Settings::default() },
            Settings { runs: Some(0), ..Settings::default() },
        ] {
            assert_eq!(s.resolve().unwrap_err().code, 2);
        }
    }

    #[test]
    fn route_and_cut_parsing() {
        assert_eq!(parse_route_key("12/1").unwrap(), RouteKey::new("12", 1));
        assert_eq!(parse_route_key("12").unwrap(), RouteKey::new("12", 0));
        let clock = LocalClock::new(-5);
        assert_eq!(parse_cut("1700000000", &clock).unwrap(), 1_700_000_000);
        assert_eq!(parse_cut("2023-10-08", &clock).unwrap(), 1_696_741_200);
        assert!(parse_cut("8 Oct", &clock).is_err());
    }
}
