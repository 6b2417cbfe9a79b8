//! Command implementations behind the `hidim-delta` binary.
//!
//! Every command returns a process exit code: 0 on success, 1 when a
//! checked property is violated, 2 for usage or configuration errors, and
//! 3 when a study completed but flagged cells with too many failed
//! replications. Study outputs are written to a directory:
//!
//! - `config.json`: the effective configuration
//! - `observations.csv`: one row per `(metric, n, p, s)`
//! - `report.json` and `summary.txt`: slopes and regime classification
//! - `plots/<metric>_s<s>.csv`: median error against `n` with the fitted line
//! - `manifest.json`: hashes, timestamps, warnings and check tallies

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use hidim_delta::data_gen::Seed;
use hidim_delta::exec::{available_workers, with_workers, Execution};
use hidim_delta::experiments::{
    build_report, run_study, CheckTally, GridConfig, Metric, RateObservation, Report, StudyKind,
};
use hidim_delta::linalg::inequalities::{run_inequality_suite, DEFAULT_RELATIVE_SLACK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FLAGGED: i32 = 3;

/// Bumped whenever the observations.csv columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 8] = ["metric", "n", "p", "s", "median_error", "q25", "q75", "replications"];

pub const SEED_ENV: &str = "HIDIM_DELTA_SEED";

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hidim_delta::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output types");
    s.push('\n');
    s
}

/// Sorted-key JSON text of a document, independent of its key order.
pub fn canonical_json(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key
    serde_json::to_string(value).expect("json values always serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A parsed configuration together with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: GridConfig,
    pub config_hash: String,
}

pub fn parse_config(text: &str, path: &Path) -> CliResult<LoadedConfig> {
    let config_err = |e: serde_json::Error| CliError::Config {
        path: path.to_path_buf(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(config_err)?;
    let config: GridConfig = serde_json::from_str(text).map_err(config_err)?;
    Ok(LoadedConfig {
        config,
        config_hash: sha256_hex(canonical_json(&value).as_bytes()),
    })
}

pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}

/// Reads the seed override from [`SEED_ENV`], if set.
pub fn seed_override_from_env() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{SEED_ENV}: {e}"))),
    }
}

fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_observations(path: &Path, observations: &[RateObservation]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for o in observations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            o.metric,
            o.n,
            o.p,
            o.s,
            format_float(o.median_error),
            format_float(o.q25),
            format_float(o.q75),
            o.replications
        );
    }
    write_file(path, &out)
}

pub fn read_observations(path: &Path) -> CliResult<Vec<RateObservation>> {
    let data_err = |message: String| CliError::Data {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| data_err(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(data_err(format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| data_err(format!("line {line}: {e}")))?;
        let field = |k: usize| record.get(k).unwrap_or_default();
        let bad = |k: usize| data_err(format!("line {line}: cannot parse {} = {:?}", CSV_HEADER[k], field(k)));
        let int = |k: usize| field(k).parse::<usize>().map_err(|_| bad(k));
        let float = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(k))
        };
        rows.push(RateObservation {
            metric: field(0).parse::<Metric>().map_err(|_| bad(0))?,
            n: int(1)?,
            p: int(2)?,
            s: int(3)?,
            median_error: float(4)?,
            q25: float(5)?,
            q75: float(6)?,
            replications: int(7)?,
        });
    }
    if rows.is_empty() {
        return Err(data_err("no observation rows".into()));
    }
    Ok(rows)
}

/// The study kind that produces the given metrics.
pub fn infer_kind(observations: &[RateObservation]) -> Option<StudyKind> {
    let has = |m: Metric| observations.iter().any(|o| o.metric == m);
    if has(Metric::RestrictionL2) {
        Some(StudyKind::Restriction)
    } else if has(Metric::BetaL2) {
        Some(StudyKind::Lasso)
    } else if has(Metric::RiskError) || has(Metric::QuadError) {
        Some(StudyKind::Portfolio)
    } else {
        None
    }
}

pub fn render_summary(report: &Report) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:+.3}"));
    let mut out = String::new();
    let _ = writeln!(out, "study: {}", report.kind);
    for m in &report.metrics {
        let _ = writeln!(out, "\n{}", m.metric);
        let _ = writeln!(out, "  {:>6}  {:>10}  {:>10}  {:>10}  {:>6}", "s", "slope(n)", "theory", "normalized", "r2");
        for row in &m.slopes_vs_n {
            let _ = writeln!(
                out,
                "  {:>6}  {:>+10.3}  {:>10}  {:>10}  {:>6.3}",
                row.s,
                row.empirical.slope,
                opt(row.theory_slope),
                opt(row.normalized.map(|f| f.slope)),
                row.empirical.r_squared
            );
        }
        if !m.slopes_vs_s.is_empty() {
            let _ = writeln!(out, "  {:>6}  {:>10}  {:>10}", "n", "slope(s)", "theory");
            for row in &m.slopes_vs_s {
                let _ = writeln!(
                    out,
                    "  {:>6}  {:>+10.3}  {:>10}",
                    row.n,
                    row.empirical.slope,
                    opt(row.theory_slope)
                );
            }
        }
    }
    if !report.regimes.is_empty() {
        let _ = writeln!(out, "\nregime (threshold {:+})", report.slope_threshold);
        for r in &report.regimes {
            let verdict = match (&r.regime, &r.note) {
                (Some(regime), _) => format!("{regime:?}"),
                (None, Some(note)) => note.clone(),
                (None, None) => "-".into(),
            };
            let axis_fixed = if r.axis == "p" { "s" } else { "n" };
            let _ = writeln!(
                out,
                "  {} vs {} at {}={}: slope {} -> {}",
                r.metric,
                r.axis,
                axis_fixed,
                r.fixed,
                opt(r.slope),
                verdict
            );
        }
    }
    out
}

/// Writes `plots/<metric>_s<s>.csv` with columns `n,median_error,fitted`.
fn write_plots(out_dir: &Path, report: &Report) -> CliResult<Vec<PathBuf>> {
    let dir = out_dir.join(PLOTS_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut written = Vec::new();
    for m in &report.metrics {
        for row in &m.slopes_vs_n {
            let mut text = String::from("n,median_error,fitted\n");
            for cell in m.cells.iter().filter(|c| c.s == row.s && c.median_error > 0.0) {
                let fitted = (row.empirical.intercept + row.empirical.slope * (cell.n as f64).ln()).exp();
                let _ = writeln!(
                    text,
                    "{},{},{}",
                    cell.n,
                    format_float(cell.median_error),
                    format_float(fitted)
                );
            }
            let path = dir.join(format!("{}_s{}.csv", m.metric, row.s));
            write_file(&path, &text)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes report.json, summary.txt and the plot files; returns their paths.
fn write_report_files(out_dir: &Path, report: &Report) -> CliResult<Vec<PathBuf>> {
    let report_path = out_dir.join(REPORT_FILE);
    write_file(&report_path, &to_json(report))?;
    let summary_path = out_dir.join(SUMMARY_FILE);
    write_file(&summary_path, &render_summary(report))?;
    let mut paths = vec![report_path, summary_path];
    paths.extend(write_plots(out_dir, report)?);
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub kind: StudyKind,
    pub config_hash: String,
    pub csv_schema_version: u32,
    pub seed: u64,
    /// Set when the seed came from the environment instead of the config.
    pub seed_override: Option<u64>,
    pub workers: usize,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub flagged_cells: Vec<FlaggedCell>,
    pub checks: Vec<CheckTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedCell {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub failures: usize,
    pub replications: usize,
}

#[derive(Debug, Clone)]
pub struct StudyArgs {
    pub kind: StudyKind,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Worker threads; `None` uses every available processor.
    pub workers: Option<usize>,
    pub allow_low_dim: bool,
    pub seed_override: Option<u64>,
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn cmd_study(args: &StudyArgs) -> CliResult<i32> {
    let started = timestamp();
    let loaded = load_config(&args.config)?;
    let mut config = loaded.config;
    if let Some(seed) = args.seed_override {
        config.seed = Seed(seed);
    }
    let warnings = config.validate(args.kind).map_err(|e| CliError::Config {
        path: args.config.clone(),
        message: e.to_string(),
    })?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !warnings.is_empty() && !args.allow_low_dim {
        return Err(CliError::Usage(format!(
            "{}; pass --allow-low-dim to run anyway",
            warnings.join("; ")
        )));
    }
    let workers = match args.workers {
        Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => w,
        None => available_workers(),
    };

    let output = with_workers(workers, || run_study(args.kind, &config, Execution::Parallel))?;
    let report = build_report(args.kind, &output.observations)?;

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let config_path = args.out.join(CONFIG_FILE);
    write_file(&config_path, &to_json(&config))?;
    let obs_path = args.out.join(OBSERVATIONS_FILE);
    write_observations(&obs_path, &output.observations)?;
    let mut outputs = vec![config_path, obs_path];
    outputs.extend(write_report_files(&args.out, &report)?);

    let flagged_cells: Vec<FlaggedCell> = output
        .cells
        .iter()
        .filter(|c| c.flagged())
        .map(|c| FlaggedCell {
            n: c.n,
            p: c.p,
            s: c.s,
            failures: c.failures,
            replications: c.replications,
        })
        .collect();
    let manifest_path = args.out.join(MANIFEST_FILE);
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: args.kind,
        config_hash: loaded.config_hash,
        csv_schema_version: CSV_SCHEMA_VERSION,
        seed: config.seed.master(),
        seed_override: args.seed_override,
        workers,
        started,
        finished: timestamp(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        warnings,
        flagged_cells,
        checks: output.checks.clone(),
    };
    write_file(&manifest_path, &to_json(&manifest))?;

    print!("{}", render_summary(&report));
    for check in &manifest.checks {
        println!(
            "check {}: {} checked, {} violations",
            check.name, check.checked, check.violations
        );
    }
    if manifest.checks.iter().any(|c| c.violations > 0) {
        return Ok(EXIT_VIOLATION);
    }
    if !manifest.flagged_cells.is_empty() {
        for c in &manifest.flagged_cells {
            eprintln!(
                "flagged: n={} p={} s={}: {} of {} replications failed",
                c.n, c.p, c.s, c.failures, c.replications
            );
        }
        return Ok(EXIT_FLAGGED);
    }
    Ok(EXIT_OK)
}

pub fn cmd_report(out_dir: &Path) -> CliResult<i32> {
    let observations = read_observations(&out_dir.join(OBSERVATIONS_FILE))?;
    let kind = infer_kind(&observations).ok_or_else(|| CliError::Data {
        path: out_dir.join(OBSERVATIONS_FILE),
        message: "no error metric present to determine the study kind".into(),
    })?;
    let report = build_report(kind, &observations)?;
    write_report_files(out_dir, &report)?;
    print!("{}", render_summary(&report));
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
pub struct NormsArgs {
    pub trials: usize,
    pub max_dim: usize,
    pub seed: u64,
    /// Where violating cases are dumped.
    pub repro: PathBuf,
}

pub fn cmd_norms(args: &NormsArgs) -> CliResult<i32> {
    if args.trials == 0 || args.max_dim == 0 {
        return Err(CliError::Usage("--trials and --max-dim must be at least 1".into()));
    }
    let report = run_inequality_suite(args.trials, args.max_dim, Seed(args.seed), DEFAULT_RELATIVE_SLACK)?;
    println!(
        "{} trials, {} checks, {} violations",
        report.trials,
        report.checks,
        report.violations.len()
    );
    if report.passed() {
        return Ok(EXIT_OK);
    }
    write_file(&args.repro, &to_json(&report.violations))?;
    eprintln!("violations written to {}", args.repro.display());
    Ok(EXIT_VIOLATION)
}
