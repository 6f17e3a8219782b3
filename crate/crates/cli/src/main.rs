use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonlocal_homog_cli::acceptance::{run_criterion, suite, SUITES};
use nonlocal_homog_cli::{in_pool, resolve_workers, run_config, CliError, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "nlhomog", version, about = "Batch experiments for nonlocal stochastic homogenization")]
struct Cli {
    /// Worker threads (overrides NONLOCAL_HOMOG_WORKERS and the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Fail with exit code 4 when a built-in threshold is violated.
        #[arg(long)]
        check: bool,
    },
    /// Run an acceptance suite.
    Check {
        /// One of: all, invariants, abp, cmi, effective, dichotomy, converge-desk, replay.
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, check } => RunConfig::load(&config).and_then(|cfg| {
            let report = run_config(&cfg, &RunOptions { out: cli.out.clone(), workers: cli.workers, check })?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("json"));
            eprintln!("wrote {} rows to {}", report.records.len(), report.out_dir.display());
            Ok(())
        }),
        Command::Check { suite: name } => check(&name, cli.workers, cli.out.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("json"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn check(name: &str, workers: Option<usize>, out: Option<PathBuf>) -> Result<(), CliError> {
    let ids = suite(name).ok_or_else(|| CliError::Config(format!("unknown suite {name}; expected one of {}", SUITES.join(", "))))?;
    let workers = resolve_workers(workers, None)?;
    let scratch = out.unwrap_or_else(|| PathBuf::from("out/check"));
    let mut failed = Vec::new();
    for id in ids {
        let v = in_pool(workers, || run_criterion(id, &scratch))??;
        println!("{v}");
        if !v.passed {
            failed.push(format!("criterion {id}"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed))
    }
}
