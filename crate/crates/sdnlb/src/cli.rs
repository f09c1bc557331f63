//! Command-line front end: scenario files in, plottable columnar series
//! and structured summaries out.
//!
//! Output contract (stable; changes bump [`SCHEMA_VERSION`]):
//!
//! - time-series files are long-format rows `series, time_s, value`,
//!   grouped by series in the order `response_ms`, `imbalance`, `mode`
//!   (mode encodes static as 0 and dynamic as 1);
//! - summary files list metrics in the [`RunSummary`] field order, with
//!   one `host_<i>_requests` row per host;
//! - `--repeats k` averages summaries over seeds `seed..seed+k`; series
//!   files always come from the first repeat.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::balancer::{AlgorithmKind, BalancerMode, Method};
use crate::sim::{run_scenario, MetricsReport, Scenario};

/// Version stamp every scenario file must carry.
pub const SCHEMA_VERSION: u32 = 1;

/// On-disk scenario document: a version stamp plus the scenario itself.
/// Unknown keys anywhere are a hard error, so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario: Scenario,
}

impl ScenarioFile {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            scenario,
        }
    }

    /// Parse a TOML scenario document; parse errors carry line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                file.schema_version
            );
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }
}

/// One row of the comparative suite's result table.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub throughput_rps: f64,
    pub mean_imbalance: f64,
}

/// The comparative suite's result: one row per method, all produced from
/// the same scenario except the method under test and its threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Parser)]
#[command(name = "sdnlb", version, about = "Simulated SDN cluster load balancing")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its series and summary
    Run {
        /// Scenario file (TOML)
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the five-method comparative suite over one scenario
    Compare {
        /// Scenario file; defaults to the built-in comparative scenario
        scenario: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the failover pair (hybrid vs round-robin) and emit both series
    Failover {
        /// Scenario file; defaults to the built-in failover scenario
        scenario: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a scenario file without running anything
    Validate {
        /// Scenario file (TOML)
        scenario: PathBuf,
    },
    /// Print the default scenario file to stdout
    DumpDefault,
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Independent repeats averaged into summaries (seeds seed, seed+1, ...)
    #[arg(long, default_value_t = 3)]
    repeats: u32,
    /// Directory output files are written into
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Output file format
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Aligned human-readable columns
    Table,
    /// Comma-separated values with a header row
    Csv,
    /// Pretty-printed JSON
    #[value(name = "json-like", alias = "json")]
    JsonLike,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Table => "txt",
            OutputFormat::Csv => "csv",
            OutputFormat::JsonLike => "json",
        }
    }
}

/// Binary entry point: parse, dispatch, map errors to a nonzero exit.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, opts } => cmd_run(&scenario, &opts),
        Command::Compare { scenario, opts } => cmd_compare(scenario.as_deref(), &opts),
        Command::Failover { scenario, opts } => cmd_failover(scenario.as_deref(), &opts),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::DumpDefault => {
            print!("{}", ScenarioFile::new(Scenario::default()).to_toml());
            Ok(())
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file =
        ScenarioFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let issues = file.scenario.validation_issues();
    if !issues.is_empty() {
        bail!("invalid scenario {}:\n  {}", path.display(), issues.join("\n  "));
    }
    Ok(file.scenario)
}

/// Summary metrics for one configuration, averaged over its repeats.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub issued: f64,
    pub served: f64,
    pub lost: f64,
    pub in_flight_at_end: f64,
    pub throughput_rps: f64,
    pub loss_rate: f64,
    pub mean_response_time_ms: f64,
    pub mean_imbalance: f64,
    pub mode_switches: f64,
    pub probe_selections: f64,
    pub probe_count: f64,
    pub per_host_requests: Vec<f64>,
}

impl RunSummary {
    fn zero(hosts: usize) -> Self {
        RunSummary {
            issued: 0.0,
            served: 0.0,
            lost: 0.0,
            in_flight_at_end: 0.0,
            throughput_rps: 0.0,
            loss_rate: 0.0,
            mean_response_time_ms: 0.0,
            mean_imbalance: 0.0,
            mode_switches: 0.0,
            probe_selections: 0.0,
            probe_count: 0.0,
            per_host_requests: vec![0.0; hosts],
        }
    }

    fn accumulate(&mut self, r: &MetricsReport) {
        self.issued += r.issued as f64;
        self.served += r.served as f64;
        self.lost += r.lost as f64;
        self.in_flight_at_end += r.in_flight_at_end as f64;
        self.throughput_rps += r.throughput;
        self.loss_rate += r.loss_rate;
        self.mean_response_time_ms += r.mean_response_time_ms;
        self.mean_imbalance += r.mean_imbalance;
        self.mode_switches += r.mode_switches as f64;
        self.probe_selections += r.probe_totals.selections as f64;
        self.probe_count += r.probe_totals.probes as f64;
        for (slot, count) in self.per_host_requests.iter_mut().zip(&r.per_host_requests) {
            *slot += *count as f64;
        }
    }

    fn scale(&mut self, k: f64) {
        self.issued *= k;
        self.served *= k;
        self.lost *= k;
        self.in_flight_at_end *= k;
        self.throughput_rps *= k;
        self.loss_rate *= k;
        self.mean_response_time_ms *= k;
        self.mean_imbalance *= k;
        self.mode_switches *= k;
        self.probe_selections *= k;
        self.probe_count *= k;
        for slot in &mut self.per_host_requests {
            *slot *= k;
        }
    }

    /// Metric rows in emission order: scalars first, then one row per host.
    fn pairs(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("issued".to_string(), self.issued),
            ("served".to_string(), self.served),
            ("lost".to_string(), self.lost),
            ("in_flight_at_end".to_string(), self.in_flight_at_end),
            ("throughput_rps".to_string(), self.throughput_rps),
            ("loss_rate".to_string(), self.loss_rate),
            ("mean_response_time_ms".to_string(), self.mean_response_time_ms),
            ("mean_imbalance".to_string(), self.mean_imbalance),
            ("mode_switches".to_string(), self.mode_switches),
            ("probe_selections".to_string(), self.probe_selections),
            ("probe_count".to_string(), self.probe_count),
        ];
        for (i, count) in self.per_host_requests.iter().enumerate() {
            rows.push((format!("host_{i}_requests"), *count));
        }
        rows
    }
}

/// Run `repeats` seeds and average the summaries; the returned report is
/// the first repeat's (its series are what the series files show).
fn run_averaged(scn: &Scenario, seed: Option<u64>, repeats: u32) -> Result<(MetricsReport, RunSummary)> {
    let base = seed.unwrap_or(scn.seed);
    let repeats = repeats.max(1);
    let mut first = None;
    let mut sum = RunSummary::zero(scn.cluster_size);
    for i in 0..repeats {
        let run_scn = Scenario {
            seed: base + u64::from(i),
            ..scn.clone()
        };
        let report = run_scenario(&run_scn)?;
        sum.accumulate(&report);
        if first.is_none() {
            first = Some(report);
        }
    }
    sum.scale(1.0 / f64::from(repeats));
    Ok((first.expect("at least one repeat"), sum))
}

#[derive(Debug, Clone, Serialize)]
struct SeriesRow {
    series: &'static str,
    time_s: f64,
    value: f64,
}

fn series_rows(report: &MetricsReport) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for s in &report.response_time_series {
        rows.push(SeriesRow {
            series: "response_ms",
            time_s: s.time,
            value: s.value,
        });
    }
    for s in &report.imbalance_series {
        rows.push(SeriesRow {
            series: "imbalance",
            time_s: s.time,
            value: s.value,
        });
    }
    for m in &report.mode_timeline {
        rows.push(SeriesRow {
            series: "mode",
            time_s: m.time,
            value: match m.mode {
                BalancerMode::Static => 0.0,
                BalancerMode::Dynamic => 1.0,
            },
        });
    }
    rows
}

#[derive(Debug, Clone, Serialize)]
struct HostRow {
    method: String,
    host: usize,
    requests: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FailoverRow {
    method: String,
    issued: f64,
    served: f64,
    lost: f64,
    loss_rate: f64,
    throughput_rps: f64,
    mean_response_time_ms: f64,
}

impl FailoverRow {
    fn from_summary(method: &str, s: &RunSummary) -> Self {
        FailoverRow {
            method: method.to_string(),
            issued: s.issued,
            served: s.served,
            lost: s.lost,
            loss_rate: s.loss_rate,
            throughput_rps: s.throughput_rps,
            mean_response_time_ms: s.mean_response_time_ms,
        }
    }
}

/// The comparative suite's configurations: four fixed methods plus the
/// hybrid at the two thresholds of interest.
pub fn comparison_variants(base: &Scenario) -> Vec<(String, Scenario)> {
    let baseline = |kind: AlgorithmKind| Scenario {
        method: Method::Baseline(kind),
        ..base.clone()
    };
    let hybrid = |threshold: f64| Scenario {
        method: Method::Hybrid,
        imbalance_threshold: threshold,
        ..base.clone()
    };
    vec![
        ("round-robin".to_string(), baseline(AlgorithmKind::RoundRobin)),
        ("least-load".to_string(), baseline(AlgorithmKind::LeastLoad)),
        ("dwrs-binary".to_string(), baseline(AlgorithmKind::DwrsBinary)),
        ("hybrid@0.005".to_string(), hybrid(0.005)),
        ("hybrid@0.01".to_string(), hybrid(0.01)),
    ]
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let render_line = |cells: Vec<String>| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            } else {
                line.push_str(&format!("{cell:>width$}", width = widths[i]));
            }
        }
        line.trim_end().to_string()
    };
    out.push_str(&render_line(header.iter().map(|h| h.to_string()).collect()));
    out.push('\n');
    for row in rows {
        out.push_str(&render_line(row.clone()));
        out.push('\n');
    }
    out
}

// cells never contain commas or quotes, so no escaping is needed
fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn write_file(dir: &Path, stem: &str, format: OutputFormat, content: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_series_file(
    dir: &Path,
    stem: &str,
    format: OutputFormat,
    report: &MetricsReport,
) -> Result<PathBuf> {
    let rows = series_rows(report);
    let content = match format {
        OutputFormat::JsonLike => render_json(&rows),
        _ => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.series.to_string(), fmt_value(r.time_s), fmt_value(r.value)])
                .collect();
            match format {
                OutputFormat::Table => render_table(&["series", "time_s", "value"], &cells),
                _ => render_csv(&["series", "time_s", "value"], &cells),
            }
        }
    };
    write_file(dir, stem, format, &content)
}

fn write_summary_file(
    dir: &Path,
    stem: &str,
    format: OutputFormat,
    summary: &RunSummary,
) -> Result<PathBuf> {
    let content = match format {
        OutputFormat::JsonLike => render_json(summary),
        _ => {
            let cells: Vec<Vec<String>> = summary
                .pairs()
                .into_iter()
                .map(|(k, v)| vec![k, fmt_value(v)])
                .collect();
            match format {
                OutputFormat::Table => render_table(&["metric", "value"], &cells),
                _ => render_csv(&["metric", "value"], &cells),
            }
        }
    };
    write_file(dir, stem, format, &content)
}

fn write_host_file(
    dir: &Path,
    stem: &str,
    format: OutputFormat,
    rows: &[HostRow],
) -> Result<PathBuf> {
    let content = match format {
        OutputFormat::JsonLike => render_json(&rows),
        _ => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.method.clone(), r.host.to_string(), fmt_value(r.requests)])
                .collect();
            match format {
                OutputFormat::Table => render_table(&["method", "host", "requests"], &cells),
                _ => render_csv(&["method", "host", "requests"], &cells),
            }
        }
    };
    write_file(dir, stem, format, &content)
}

fn host_rows(method: &str, summary: &RunSummary) -> Vec<HostRow> {
    summary
        .per_host_requests
        .iter()
        .enumerate()
        .map(|(host, requests)| HostRow {
            method: method.to_string(),
            host,
            requests: *requests,
        })
        .collect()
}

fn cmd_run(path: &Path, opts: &RunOpts) -> Result<()> {
    let scn = load_scenario(path)?;
    let (first, avg) = run_averaged(&scn, opts.seed, opts.repeats)?;
    fs::create_dir_all(&opts.out_dir)
        .with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let series = write_series_file(&opts.out_dir, "run_timeseries", opts.format, &first)?;
    let summary = write_summary_file(&opts.out_dir, "run_summary", opts.format, &avg)?;
    let cells: Vec<Vec<String>> = avg
        .pairs()
        .into_iter()
        .map(|(k, v)| vec![k, fmt_value(v)])
        .collect();
    print!("{}", render_table(&["metric", "value"], &cells));
    println!("wrote {}", series.display());
    println!("wrote {}", summary.display());
    Ok(())
}

fn cmd_compare(path: Option<&Path>, opts: &RunOpts) -> Result<()> {
    let scn = match path {
        Some(p) => load_scenario(p)?,
        None => Scenario::comparative(),
    };
    fs::create_dir_all(&opts.out_dir)
        .with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let mut table = ComparisonTable { rows: Vec::new() };
    let mut hosts = Vec::new();
    for (label, variant) in comparison_variants(&scn) {
        let (_, avg) = run_averaged(&variant, opts.seed, opts.repeats)?;
        hosts.extend(host_rows(&label, &avg));
        table.rows.push(ComparisonRow {
            method: label,
            throughput_rps: avg.throughput_rps,
            mean_imbalance: avg.mean_imbalance,
        });
    }
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![r.method.clone(), fmt_value(r.throughput_rps), fmt_value(r.mean_imbalance)])
        .collect();
    let header = ["method", "throughput_rps", "mean_imbalance"];
    let content = match opts.format {
        OutputFormat::JsonLike => render_json(&table),
        OutputFormat::Table => render_table(&header, &cells),
        OutputFormat::Csv => render_csv(&header, &cells),
    };
    let main_file = write_file(&opts.out_dir, "comparison", opts.format, &content)?;
    let host_file = write_host_file(&opts.out_dir, "comparison_hosts", opts.format, &hosts)?;
    print!("{}", render_table(&header, &cells));
    println!("wrote {}", main_file.display());
    println!("wrote {}", host_file.display());
    Ok(())
}

fn cmd_failover(path: Option<&Path>, opts: &RunOpts) -> Result<()> {
    let scn = match path {
        Some(p) => load_scenario(p)?,
        None => Scenario::failover(),
    };
    fs::create_dir_all(&opts.out_dir)
        .with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let pair = [
        ("hybrid", Method::Hybrid),
        ("round-robin", Method::Baseline(AlgorithmKind::RoundRobin)),
    ];
    let mut rows = Vec::new();
    let mut hosts = Vec::new();
    let mut series_files = Vec::new();
    for (label, method) in pair {
        let variant = Scenario {
            method,
            ..scn.clone()
        };
        let (first, avg) = run_averaged(&variant, opts.seed, opts.repeats)?;
        let stem = format!("failover_{}_timeseries", label.replace('-', "_"));
        series_files.push(write_series_file(&opts.out_dir, &stem, opts.format, &first)?);
        hosts.extend(host_rows(label, &avg));
        rows.push(FailoverRow::from_summary(label, &avg));
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                fmt_value(r.issued),
                fmt_value(r.served),
                fmt_value(r.lost),
                fmt_value(r.loss_rate),
                fmt_value(r.throughput_rps),
                fmt_value(r.mean_response_time_ms),
            ]
        })
        .collect();
    let header = [
        "method",
        "issued",
        "served",
        "lost",
        "loss_rate",
        "throughput_rps",
        "mean_response_time_ms",
    ];
    let content = match opts.format {
        OutputFormat::JsonLike => render_json(&rows),
        OutputFormat::Table => render_table(&header, &cells),
        OutputFormat::Csv => render_csv(&header, &cells),
    };
    let summary_file = write_file(&opts.out_dir, "failover_summary", opts.format, &content)?;
    let host_file = write_host_file(&opts.out_dir, "failover_hosts", opts.format, &hosts)?;
    print!("{}", render_table(&header, &cells));
    for f in series_files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", summary_file.display());
    println!("wrote {}", host_file.display());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    load_scenario(path)?;
    println!("ok");
    Ok(())
}
