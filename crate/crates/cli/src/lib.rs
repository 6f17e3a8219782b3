//! Batch runner: TOML configs in, CSV rows, a JSON summary and a replay file out.

pub mod acceptance;
pub mod config;
pub mod run;

use std::path::{Path, PathBuf};

use nonlocal_homog::homog::SolveRecord;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{Experiment, RunConfig, SCHEMA_VERSION};
pub use run::Check;

pub const WORKERS_ENV: &str = "NONLOCAL_HOMOG_WORKERS";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPLAY_FILE: &str = "replay.toml";
pub const SOLUTION_FILE: &str = "solution.csv";

/// Column order of the per-solve CSV.
pub const CSV_COLUMNS: [&str; 9] =
    ["experiment_id", "eps", "seed", "level", "contact_fraction", "sup_norm", "iterations", "residual", "wall_ms"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(nonlocal_homog::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{} check(s) failed: {}", .0.len(), .0.join(", "))]
    CheckFailed(Vec<String>),
}

impl From<nonlocal_homog::Error> for CliError {
    fn from(e: nonlocal_homog::Error) -> Self {
        match e {
            nonlocal_homog::Error::Config(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(nonlocal_homog::Error::NonConvergence { .. }) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(nonlocal_homog::Error::NonConvergence { .. }) => "non_convergence",
            CliError::Core(nonlocal_homog::Error::Experiment(_)) => "experiment",
            CliError::Core(_) => "usage",
            CliError::Io(_) => "io",
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> Value {
        let mut v = json!({
            "schema_version": SCHEMA_VERSION,
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Core(nonlocal_homog::Error::NonConvergence { iterations, residual, history }) = self {
            v["iterations"] = json!(iterations);
            v["residual"] = json!(residual);
            v["history_tail"] = json!(&history[history.len().saturating_sub(20)..]);
        }
        v
    }
}

/// Worker count: the flag, then the environment variable, then the config,
/// then the available parallelism.
pub fn resolve_workers(flag: Option<usize>, cfg: Option<usize>) -> Result<usize, CliError> {
    if let Some(w) = flag {
        return positive(w);
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let w = v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a worker count")))?;
        return positive(w);
    }
    if let Some(w) = cfg {
        return positive(w);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn positive(w: usize) -> Result<usize, CliError> {
    if w == 0 {
        return Err(CliError::Config("worker count must be positive".into()));
    }
    Ok(w)
}

pub fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub check: bool,
}

pub struct RunReport {
    pub out_dir: PathBuf,
    pub records: Vec<SolveRecord>,
    pub summary: Value,
    pub checks: Vec<Check>,
}

/// Runs one configuration and writes its outputs into the output directory.
pub fn run_config(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let workers = resolve_workers(opts.workers, cfg.workers)?;
    let out_dir = opts.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut outcome = in_pool(workers, || run::execute(cfg))??;
    let mut replay = cfg.resolved(workers);
    replay.out = None;
    if let Experiment::Effective { theta, .. } = &mut replay.experiment {
        if theta.is_none() {
            *theta = outcome.result.get("theta").and_then(Value::as_f64);
        }
    }
    if !cfg.timing {
        for r in &mut outcome.records {
            r.wall_ms = 0.0;
        }
        zero_wall_times(&mut outcome.result);
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment.id(),
        "workers": workers,
        "records": outcome.records.len(),
        "result": outcome.result,
        "checks": outcome.checks,
    });
    std::fs::create_dir_all(&out_dir)?;
    write_records(&out_dir.join(RECORDS_FILE), &outcome.records)?;
    std::fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary).expect("json"))?;
    std::fs::write(out_dir.join(REPLAY_FILE), replay.to_toml())?;
    if let Some(sol) = &outcome.solution {
        write_solution(&out_dir.join(SOLUTION_FILE), sol, cfg.dimension)?;
    }
    if opts.check {
        let failed: Vec<String> = outcome.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect();
        if !failed.is_empty() {
            return Err(CliError::CheckFailed(failed));
        }
    }
    Ok(RunReport { out_dir, records: outcome.records, summary, checks: outcome.checks })
}

fn zero_wall_times(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k == "wall_ms" {
                    *x = json!(0.0);
                } else {
                    zero_wall_times(x);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(zero_wall_times),
        _ => {}
    }
}

/// All rows go through this single writer, in work-item order.
pub fn write_records(path: &Path, records: &[SolveRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_record(CSV_COLUMNS).map_err(|e| CliError::Io(e.to_string()))?;
    for r in records {
        w.write_record([
            r.experiment_id.clone(),
            r.eps.to_string(),
            r.seed.to_string(),
            r.level.to_string(),
            r.contact_fraction.map(|c| c.to_string()).unwrap_or_default(),
            r.sup_norm.to_string(),
            r.iterations.to_string(),
            r.residual.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_solution(path: &Path, sol: &[([f64; 2], f64)], n: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let header: Vec<&str> = if n == 1 { vec!["x", "u"] } else { vec!["x", "y", "u"] };
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (x, u) in sol {
        let mut row = vec![x[0].to_string()];
        if n == 2 {
            row.push(x[1].to_string());
        }
        row.push(u.to_string());
        w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records file back as rows of strings.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Io(e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

/// Row-by-row comparison that ignores the `wall_ms` column.
pub fn rows_match_ignoring_time(a: &[Vec<String>], b: &[Vec<String>]) -> bool {
    let t = CSV_COLUMNS.iter().position(|c| *c == "wall_ms").unwrap();
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).enumerate().all(|(i, (p, q))| i == t || p == q)
        })
}
