//! End-to-end checks of the binary: exit codes, output file names, and the
//! documented column contracts for every format.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdnlb::cli::ScenarioFile;
use sdnlb::sim::{ClientParams, Scenario};

fn sdnlb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdnlb"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

/// A scenario small enough that a debug-build run finishes in well under a
/// second.
fn quick_scenario() -> Scenario {
    Scenario {
        duration: 6.0,
        client: ClientParams {
            thread_count: 6,
            ..Scenario::default().client
        },
        ..Scenario::default()
    }
}

fn write_scenario(dir: &Path, name: &str, scenario: Scenario) -> String {
    let path = dir.join(name);
    fs::write(&path, ScenarioFile::new(scenario).to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn dump_default_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = sdnlb(&["dump-default"], dir.path());
    assert!(dumped.status.success());
    let text = stdout_of(&dumped);
    assert!(text.starts_with("schema_version = 1"));

    let path = dir.path().join("default.toml");
    fs::write(&path, &text).unwrap();
    let checked = sdnlb(&["validate", path.to_str().unwrap()], dir.path());
    assert!(checked.status.success());
    assert_eq!(stdout_of(&checked).trim(), "ok");
}

#[test]
fn run_writes_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), "quick.toml", quick_scenario());
    let out = sdnlb(
        &["run", &scn, "--repeats", "1", "--format", "csv", "--out-dir", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let series = fs::read_to_string(dir.path().join("out/run_timeseries.csv")).unwrap();
    let mut lines = series.lines();
    assert_eq!(lines.next(), Some("series,time_s,value"));
    let order: Vec<&str> = series
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let first_imbalance = order.iter().position(|&s| s == "imbalance").unwrap();
    let first_mode = order.iter().position(|&s| s == "mode").unwrap();
    let last_response = order.iter().rposition(|&s| s == "response_ms").unwrap();
    assert!(last_response < first_imbalance);
    assert!(first_imbalance < first_mode);

    let summary = fs::read_to_string(dir.path().join("out/run_summary.csv")).unwrap();
    let metrics: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let expected_prefix = [
        "issued",
        "served",
        "lost",
        "in_flight_at_end",
        "throughput_rps",
        "loss_rate",
        "mean_response_time_ms",
        "mean_imbalance",
        "mode_switches",
        "probe_selections",
        "probe_count",
    ];
    assert_eq!(&metrics[..expected_prefix.len()], expected_prefix);
    for (i, metric) in metrics[expected_prefix.len()..].iter().enumerate() {
        assert_eq!(*metric, format!("host_{i}_requests"));
    }
    assert_eq!(metrics.len(), expected_prefix.len() + 8);
}

#[test]
fn run_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), "quick.toml", quick_scenario());
    for out_dir in ["first", "second"] {
        let out = sdnlb(
            &["run", &scn, "--repeats", "1", "--format", "csv", "--out-dir", out_dir],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    for name in ["run_timeseries.csv", "run_summary.csv"] {
        let first = fs::read(dir.path().join("first").join(name)).unwrap();
        let second = fs::read(dir.path().join("second").join(name)).unwrap();
        assert_eq!(first, second, "{name} differs between identical runs");
    }
}

#[test]
fn seed_flag_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    // threshold 0 keeps the controller dynamic, so selection draws shape
    // the host distribution and the seed is visible in the summary
    let scn = write_scenario(
        dir.path(),
        "quick.toml",
        Scenario {
            imbalance_threshold: 0.0,
            ..quick_scenario()
        },
    );
    for (out_dir, seed) in [("a", "1"), ("b", "2")] {
        let out = sdnlb(
            &["run", &scn, "--repeats", "1", "--seed", seed, "--format", "csv", "--out-dir", out_dir],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    let a = fs::read(dir.path().join("a/run_summary.csv")).unwrap();
    let b = fs::read(dir.path().join("b/run_summary.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn compare_emits_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), "quick.toml", quick_scenario());
    let out = sdnlb(
        &["compare", &scn, "--repeats", "1", "--format", "csv", "--out-dir", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let table = fs::read_to_string(dir.path().join("out/comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,throughput_rps,mean_imbalance"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        methods,
        ["round-robin", "least-load", "dwrs-binary", "hybrid@0.005", "hybrid@0.01"]
    );

    let hosts = fs::read_to_string(dir.path().join("out/comparison_hosts.csv")).unwrap();
    assert_eq!(hosts.lines().count(), 1 + 5 * 8);
}

#[test]
fn failover_writes_both_series_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdnlb(
        &["failover", "--repeats", "1", "--format", "json-like", "--out-dir", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    for name in [
        "failover_hybrid_timeseries.json",
        "failover_round_robin_timeseries.json",
        "failover_summary.json",
        "failover_hosts.json",
    ] {
        assert!(dir.path().join("out").join(name).exists(), "{name} missing");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/failover_summary.json")).unwrap())
            .unwrap();
    let rows = summary.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method"], "hybrid");
    assert_eq!(rows[1]["method"], "round-robin");
    assert_eq!(rows[0]["lost"], 0.0);
    assert!(rows[1]["lost"].as_f64().unwrap() > 0.0);
}

#[test]
fn table_format_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), "quick.toml", quick_scenario());
    let out = sdnlb(&["run", &scn, "--repeats", "1", "--out-dir", "out"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let summary = fs::read_to_string(dir.path().join("out/run_summary.txt")).unwrap();
    let first = summary.lines().next().unwrap();
    assert!(first.starts_with("metric"));
    assert!(first.trim_end().ends_with("value"));
}

#[test]
fn broken_toml_fails_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "schema_version = 1\nscenario = what\n").unwrap();
    let out = sdnlb(&["validate", path.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn semantic_errors_name_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(
        dir.path(),
        "bad.toml",
        Scenario {
            cluster_size: 0,
            ..quick_scenario()
        },
    );
    let out = sdnlb(&["validate", &scn], dir.path());
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("cluster_size"), "stderr: {err}");
}
