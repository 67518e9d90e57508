use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use probe_cli::output::Table;
use probe_cli::run::{execute, forward_oracle, write_outputs};
use probe_cli::scenario::{parse_scenario, ConfigError, DEFAULT_FORWARD_NODES};
use serde_json::json;

/// Scenario runner for needle evaluations, forward-solver checks and probe scans.
#[derive(Debug, Parser)]
#[command(name = "probe-cli", version)]
struct Cli {
    /// Worker threads for the grid scan (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Fail with status 3 if a discrepancy column exceeds this value.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write its CSV outputs.
    Run { scenario: PathBuf },
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Analytic cross-checks printed as CSV on stdout.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Debug, Subcommand)]
enum Oracle {
    /// Concentric-disk DtN eigenvalues, numeric against closed form.
    Dtn {
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 16)]
        nmax: usize,
    },
}

enum Failure {
    Config(ConfigError),
    Run(anyhow::Error),
    Tolerance { max: f64, tolerance: f64 },
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (record, code) = match self {
            Failure::Config(e) => (json!({ "status": "error", "stage": "config", "key": e.key, "message": e.message }), 2),
            Failure::Run(e) => (json!({ "status": "error", "stage": "run", "message": format!("{e:#}") }), 1),
            Failure::Tolerance { max, tolerance } => (
                json!({ "status": "error", "stage": "tolerance", "max_discrepancy": max, "tolerance": tolerance }),
                3,
            ),
        };
        eprintln!("{record}");
        ExitCode::from(code)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Failure::Config(c),
            Err(e) => Failure::Run(e),
        }
    }
}

fn check_tolerance(max: Option<f64>, tolerance: Option<f64>) -> Result<(), Failure> {
    match (max, tolerance) {
        (Some(max), Some(tolerance)) if !(max <= tolerance) => Err(Failure::Tolerance { max, tolerance }),
        _ => Ok(()),
    }
}

fn load(path: &PathBuf) -> Result<probe_cli::Scenario, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).map_err(Failure::Config)
}

fn real_main(cli: Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("{}", json!({ "status": "ok", "kind": s.kind.name(), "scenario_hash": s.hash() }));
        }
        Command::Run { scenario } => {
            let s = load(&scenario)?;
            let out = execute(&s)?;
            let files = write_outputs(&s, &out)?;
            let max = out.max_discrepancy();
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "status": "ok", "kind": s.kind.name(), "files": files, "max_discrepancy": max }));
            check_tolerance(max, cli.tolerance)?;
        }
        Command::Oracle { which: Oracle::Dtn { rho, nmax } } => {
            if !(1..=128).contains(&nmax) {
                return Err(Failure::Config(ConfigError { key: "--nmax".into(), message: format!("{nmax} out of [1,128]") }));
            }
            let t: Table = forward_oracle(rho, 1.0, nmax, DEFAULT_FORWARD_NODES)?;
            print!("{}", t.body());
            check_tolerance(t.max_discrepancy(), cli.tolerance)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
