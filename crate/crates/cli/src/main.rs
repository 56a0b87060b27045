//! `urnlab` command-line front end.
//!
//! Every subcommand reads one JSON config, merges the global flags into it,
//! fills its defaults, writes its outputs and a `manifest.json` into the
//! output directory, and prints the summary as JSON on stdout.

mod commands;
mod config;
mod error;
mod svg;

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use crate::commands::{Command, Manifest, Sink, CSV_SCHEMA};
use crate::config::ExperimentConfig;
use crate::error::{exit, CliError, CliResult};

/// Output directory override when `--out` is absent.
const OUT_ENV: &str = "URNLAB_OUT";
const DEFAULT_OUT: &str = "urnlab-out";

#[derive(Debug, Parser)]
#[command(name = "urnlab", version, about = "Exact and Monte Carlo experiments on generalised Bernoulli–Laplace urn chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides URNLAB_OUT; default ./urnlab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed for Monte Carlo commands.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// State-count cap for enumeration.
    #[arg(long, global = true, value_name = "N")]
    cap: Option<usize>,
    /// Poisson truncation tolerance for exact evolution.
    #[arg(long, global = true, value_name = "FLOAT")]
    tol: Option<f64>,
}

impl Cli {
    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.cap.is_some() {
            cfg.cap = self.cap;
        }
        if self.tol.is_some() {
            cfg.tol = self.tol;
        }
        commands::resolve(self.command, &mut cfg)?;
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let cfg = cli.config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut sink = Sink::new(cli.out_dir(), cli.svg)?;
    let report = pool.install(|| commands::run(cli.command, &cfg, &mut sink))?;
    let manifest = Manifest {
        tool: "urnlab",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: &cfg,
        outputs: &sink.outputs,
        csv_schema: CSV_SCHEMA,
        summary: &report.summary,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(sink.dir().join("manifest.json"), format!("{text}\n"))?;
    let summary = serde_json::to_string_pretty(&report.summary).map_err(|e| CliError::Config(e.to_string()))?;
    // a closed stdout (for example a pipe into `head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{summary}");
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("urnlab {}: {e}", cli.command.name());
            e.exit_code()
        }
    };
    std::process::exit(code);
}
