use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MISSING: &str = "\u{2014}";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(days: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&["synth", "--days", days, "--out", &dir.path().join("data").display().to_string()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Self { dir }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.dir.path().join("data").join(name)
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    /// Input and output flags for the fixture corpus, with `weather` and
    /// `pings` overridable.
    fn flags(&self, pings: &Path, weather: &Path) -> Vec<String> {
        [
            ("--gtfs", self.data("gtfs")),
            ("--pings", pings.to_path_buf()),
            ("--weather", weather.to_path_buf()),
            ("--intersections", self.data("intersections.csv")),
            ("--out", self.out()),
        ]
        .into_iter()
        .flat_map(|(f, p)| [f.to_string(), p.display().to_string()])
        .collect()
    }

    fn run(&self, command: &[&str]) -> Output {
        let flags = self.flags(&self.data("pings.csv"), &self.data("weather.csv"));
        let mut args: Vec<&str> = command.to_vec();
        args.extend(flags.iter().map(String::as_str));
        run(&args)
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linktime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
    csv::Reader::from_reader(bytes)
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_input_error(o: &Output, needle: &str) {
    assert_eq!(o.status.code(), Some(2), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains(needle), "{err}");
}

#[test]
fn missing_weather_hour_is_an_input_error_naming_the_hour() {
    let fx = Fixture::new("2");
    let text = std::fs::read_to_string(fx.data("weather.csv")).unwrap();
    let trimmed: String = text
        .lines()
        .filter(|l| !l.starts_with("2023-08-21,12,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let weather = fx.dir.path().join("weather.csv");
    std::fs::write(&weather, trimmed).unwrap();
    let flags = fx.flags(&fx.data("pings.csv"), &weather);
    let mut args = vec!["infer"];
    args.extend(flags.iter().map(String::as_str));
    assert_input_error(&run(&args), "2023-08-21 hour 12");
}

#[test]
fn empty_pings_file_is_an_input_error() {
    let fx = Fixture::new("1");
    let pings = fx.dir.path().join("empty.csv");
    std::fs::write(&pings, "trip_id,vehicle_id,timestamp,lat,lon\n").unwrap();
    let flags = fx.flags(&pings, &fx.data("weather.csv"));
    let mut args = vec!["infer"];
    args.extend(flags.iter().map(String::as_str));
    assert_input_error(&run(&args), "empty");
}

#[test]
fn missing_input_path_is_an_input_error() {
    let fx = Fixture::new("1");
    let flags = fx.flags(&fx.dir.path().join("nowhere.csv"), &fx.data("weather.csv"));
    let mut args = vec!["infer"];
    args.extend(flags.iter().map(String::as_str));
    assert_input_error(&run(&args), "nowhere.csv");
}

#[test]
fn unknown_trip_and_off_service_time_are_input_errors() {
    let fx = Fixture::new("3");
    assert!(fx.run(&["infer"]).status.success());
    assert!(fx.run(&["fit"]).status.success());
    assert_input_error(&fx.run(&["simulate", "--trip", "NOPE", "--at", "0"]), "NOPE");
    assert_input_error(
        &fx.run(&["simulate", "--trip", "T20230821-0602", "--at", "0"]),
        "not found at timestamp 0",
    );
}

#[test]
fn unknown_config_key_is_rejected_and_flags_override_the_file() {
    let fx = Fixture::new("1");
    let cfg = fx.dir.path().join("run.conf");
    std::fs::write(&cfg, "# comment\nspeed_limit = 3\n").unwrap();
    let cfg_arg = cfg.display().to_string();
    assert_input_error(&fx.run(&["infer", "--config", &cfg_arg]), "speed_limit");

    std::fs::write(&cfg, "buffer_radius = -4\n").unwrap();
    assert_input_error(&fx.run(&["infer", "--config", &cfg_arg]), "buffer_radius");
    let ok = fx.run(&["infer", "--config", &cfg_arg, "--buffer-radius", "20"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn degenerate_link_is_reported_missing_and_the_rest_fit() {
    let fx = Fixture::new("3");
    assert!(fx.run(&["infer"]).status.success());
    let obs = fx.out().join("observations.csv");
    let text = std::fs::read_to_string(&obs).unwrap();
    let mut kept_link3 = 0;
    let filtered: String = text
        .lines()
        .filter(|l| {
            if l.split(',').nth(3) != Some("3") {
                return true;
            }
            kept_link3 += 1;
            kept_link3 <= 2
        })
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&obs, filtered).unwrap();

    let out = fx.run(&["fit"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&std::fs::read(fx.out().join("fit.csv")).unwrap());
    assert_eq!(rows.len(), 5);
    for r in &rows {
        if r[1] == "3" {
            assert!(r[5].starts_with("insufficient data"), "{r:?}");
            assert!(r[6..].iter().all(|c| c == MISSING), "{r:?}");
        } else {
            assert_eq!(r[5], "ok", "{r:?}");
            assert_ne!(r[6], MISSING);
        }
    }

    // Only fitted links are stored, so prediction serves the other four.
    let pred = fx.run(&["predict", "--covariates", "0,1,1,0"]);
    assert!(pred.status.success(), "{}", stderr(&pred));
    let links: Vec<String> = csv_rows(&pred.stdout).iter().map(|r| r[1].clone()).collect();
    assert_eq!(links, ["1", "2", "4", "5"]);
}

#[test]
fn store_round_trip_gives_identical_predictions() {
    let fx = Fixture::new("4");
    assert!(fx.run(&["infer"]).status.success());
    assert!(fx.run(&["fit"]).status.success());
    let first = fx.run(&["predict"]);
    let store = std::fs::read(fx.out().join("models.txt")).unwrap();
    assert!(fx.run(&["fit"]).status.success());
    assert_eq!(std::fs::read(fx.out().join("models.txt")).unwrap(), store);
    let second = fx.run(&["predict"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    // 5 links × 16 covariate combinations plus the header.
    assert_eq!(String::from_utf8(first.stdout).unwrap().lines().count(), 81);
}

#[test]
fn replay_emits_one_batch_per_indicator_flip() {
    let fx = Fixture::new("6");
    assert!(fx.run(&["infer"]).status.success());
    assert!(fx.run(&["fit"]).status.success());

    // A trip whose last link was traffic-affected, replayed to its end.
    let links = std::fs::read_to_string(fx.data("truth_links.csv")).unwrap();
    let trip = links
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|r| r[1] == "4" && r[5] == "1")
        .map(|r| r[0].to_string())
        .expect("a jammed traversal on link 4");
    let stops = std::fs::read_to_string(fx.data("truth_stops.csv")).unwrap();
    let at = stops
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|r| r[0] == trip && r[1] == "4")
        .map(|r| r[3].parse::<f64>().unwrap() as i64 - 1)
        .unwrap();

    let out = fx.run(&["simulate", "--trip", &trip, "--at", &at.to_string(), "--replay", "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let batches = v["batches"].as_array().unwrap();
    assert!(batches.len() >= 2, "{v}");
    for pair in batches.windows(2) {
        assert!(pair[0]["tau"].as_i64() < pair[1]["tau"].as_i64());
        assert_ne!(pair[0]["traffic"], pair[1]["traffic"]);
    }
    assert!(batches.iter().any(|b| b["traffic"] == true));
    for b in batches {
        let stops = b["stops"].as_array().unwrap();
        let means: Vec<f64> = stops.iter().map(|s| s["mean_s"].as_f64().unwrap()).collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn json_mode_mirrors_csv() {
    let fx = Fixture::new("3");
    assert!(fx.run(&["infer"]).status.success());
    assert!(fx.run(&["fit"]).status.success());
    let csv_out = fx.run(&["predict", "--covariates", "0110"]);
    let json_out = fx.run(&["predict", "--covariates", "[0,1,1,0]", "--json"]);
    let cells = csv_rows(&csv_out.stdout);
    let v: serde_json::Value = serde_json::from_slice(&json_out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), cells.len());
    for (row, c) in rows.iter().zip(&cells) {
        assert_eq!(row["link"].as_f64().unwrap().to_string(), c[1]);
        assert_eq!(row["covariates"].as_str().unwrap(), c[2]);
        assert_eq!(format!("{:.3}", row["point_s"].as_f64().unwrap()), c[3]);
    }
    assert!(fx.out().join("predictions.json").exists());
}
