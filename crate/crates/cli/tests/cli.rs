use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nowcast_ingest::fixture_server::{FixtureConfig, FixtureServer};
use sha2::{Digest, Sha256};

const DEMO_SHA256: &str = "ad138ae0450ef62bce583d277e24ccb4c210fe15a443238deb24a38863022453";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn nowcast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_demo_replay_is_pinned() {
    let bytes = std::fs::read(fixtures().join("demo_30d.csv")).unwrap();
    assert_eq!(hex::encode(Sha256::digest(&bytes)), DEMO_SHA256);
}

#[test]
fn synth_reproduces_the_bundled_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = nowcast(&["synth", "--kind", "weather", "--output", "demo.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = std::fs::read(dir.path().join("demo.csv")).unwrap();
    assert_eq!(hex::encode(Sha256::digest(&bytes)), DEMO_SHA256);
}

#[test]
fn missing_replay_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[cities.x]\nreplay = \"nowhere.csv\"\n[targets.t]\ncolumn = \"a\"\n[models.m]\nkind = \"gbt\"\n",
    )
    .unwrap();
    let o = nowcast(&["--config", "c.toml", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_bad_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nowcast(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(nowcast(&["--config", "absent.toml", "run"], dir.path()).status.code(), Some(2));
    assert_eq!(nowcast(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn horizon_with_infinite_threshold_stops_at_first_window() {
    let dir = tempfile::tempdir().unwrap();
    let replay = fixtures().join("demo_30d.csv");
    let o = nowcast(
        &["--out", "out", "horizon", "--replay", replay.to_str().unwrap(), "--threshold", "inf"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["t_vh"], 30);
    assert_eq!(v["stopped_by"], "plateau");
    let curve = std::fs::read_to_string(dir.path().join("out/psi_demo_30d.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("t,psi"));
    assert_eq!(curve.lines().count(), 1 + 25);
}

#[test]
fn horizon_on_short_history_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = nowcast(&["synth", "--kind", "gaussian", "--length", "20", "--output", "short.csv"], dir.path());
    assert!(o.status.success());
    let o = nowcast(&["horizon", "--replay", "short.csv"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn fetch_config(dir: &Path, api_base: &str) {
    let text = format!(
        r#"
        [cities.bos]
        latitude = 42.36
        longitude = -71.06
        points_per_side = 2
        span_km = 50.0
        variables = ["temperature_2m", "cloud_cover"]
        reference_variables = ["temperature_2m"]
        [targets.t]
        column = "temperature_2m_0_0"
        [models.m]
        kind = "gbt"
        [source]
        api_base = "{api_base}"
        min_request_interval_ms = 0
        cache_dir = "cache"
        "#
    );
    std::fs::write(dir.join("fetch.toml"), text).unwrap();
}

#[test]
fn fetch_then_offline_refetch_is_identical() {
    let server = FixtureServer::start(FixtureConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fetch_config(dir.path(), &server.url());
    let args = ["--config", "fetch.toml", "--out", "a", "fetch", "--start", "2023-05-10", "--end", "2023-05-11"];
    let o = nowcast(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read_to_string(dir.path().join("a/bos.csv")).unwrap();
    assert_eq!(first.lines().count(), 1 + 48);
    assert!(first.lines().next().unwrap().ends_with("ref_temperature_2m"));
    let requests = server.request_count();
    drop(server);

    let args = [
        "--config", "fetch.toml", "--out", "b", "--offline", "fetch", "--start", "2023-05-10", "--end", "2023-05-11",
    ];
    let o = nowcast(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("b/bos.csv")).unwrap(), first);
    assert!(requests >= 4);

    let args = [
        "--config", "fetch.toml", "--out", "c", "--offline", "fetch", "--start", "2023-05-01", "--end", "2023-05-02",
    ];
    let o = nowcast(&args, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unreachable_source_exits_3_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    fetch_config(dir.path(), "http://127.0.0.1:9/v1/forecast");
    let o = nowcast(
        &["--config", "fetch.toml", "--out", "out", "fetch", "--start", "2023-05-10", "--end", "2023-05-10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let out = dir.path().join("out");
    let leftovers = std::fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
    assert_eq!(leftovers, 0);
}

#[test]
fn run_then_report_and_drift_check() {
    let dir = tempfile::tempdir().unwrap();
    let replay = fixtures().join("demo_30d.csv");
    let text = format!(
        r#"
        [data]
        validation_days = 2
        [cities.demo]
        replay = "{}"
        [targets.temperature]
        column = "temperature_2m_0_0"
        reference = "ref_temperature_2m"
        [models.xgb]
        kind = "gbt"
        n_trees = 3
        max_depth = 2
        [policies]
        retrain = ["hourly"]
        window = ["full_static"]
        [clock]
        warmup_hours = 600
        ticks = 8
        "#,
        replay.display()
    );
    std::fs::write(dir.path().join("small.toml"), text).unwrap();
    let o = nowcast(&["--config", "small.toml", "--out", "out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("hourly/full_static"));
    assert!(stdout(&o).contains("reference"));
    let out = dir.path().join("out");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let o = nowcast(&["--config", "small.toml", "--out", "again", "report", "--log", "out/log.ndjson"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("again/metrics.csv")).unwrap(), metrics);

    let model = out.join("models/demo__temperature__xgb__hourly__full_static.ncm");
    assert!(model.exists());
    let o = nowcast(
        &["--config", "small.toml", "drift-check", "--model", model.to_str().unwrap(), "--at", "2023-05-27T00:00:00Z"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["drifted"].is_boolean());
    assert_eq!(v["checked_at"], "2023-05-27T00:00:00Z");
}
