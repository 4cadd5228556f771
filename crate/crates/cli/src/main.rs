//! `tempogeo` — scenario runner for stochastic processes on manifolds with
//! time-dependent metrics.
//!
//! Exit codes: `0` success, `1` an analysis was rejected, `2` configuration
//! error, `3` numeric abort during simulation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tempogeo_core::scenario::{self, RunOptions, RunnerError, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "tempogeo",
    version,
    about = "Simulate and test stochastic processes on manifolds with time-dependent geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON file (or a built-in scenario by name)
    Run {
        /// Path to a scenario JSON file, or the name of a built-in
        spec: String,
        /// Override the ensemble seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker thread count (never affects results, only wall time)
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory for CSV reports
        #[arg(long, default_value = "tempogeo-out")]
        out: PathBuf,
    },
    /// List the built-in scenario catalog
    List,
    /// Check a scenario file against the schema and the field DSL
    Validate {
        /// Path to a scenario JSON file, or the name of a built-in
        spec: String,
    },
}

const EXIT_REJECTED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn load_spec(arg: &str) -> Result<ScenarioSpec, (u8, String)> {
    let path = std::path::Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| (EXIT_CONFIG, format!("cannot read {arg}: {e}")))?;
        scenario::parse_spec(&text).map_err(|diags| {
            let mut msg = format!("{arg} does not match the scenario schema:\n");
            for d in diags {
                msg.push_str(&format!("  {d}\n"));
            }
            (EXIT_CONFIG, msg)
        })
    } else if let Some(spec) = scenario::builtin(arg) {
        Ok(spec)
    } else {
        Err((
            EXIT_CONFIG,
            format!(
                "`{arg}` is neither a readable file nor a built-in scenario (see `tempogeo list`)"
            ),
        ))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            println!("{:<22} description", "name");
            for (name, description) in scenario::catalog() {
                println!("{name:<22} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { spec } => match load_spec(&spec) {
            Err((code, msg)) => {
                eprintln!("{msg}");
                ExitCode::from(code)
            }
            Ok(parsed) => {
                let diags = scenario::validate(&parsed);
                if diags.is_empty() {
                    println!("ok: {} is a valid scenario", parsed.name);
                    ExitCode::SUCCESS
                } else {
                    for d in &diags {
                        eprintln!("{d}");
                    }
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        },
        Command::Run {
            spec,
            seed,
            workers,
            out,
        } => {
            let parsed = match load_spec(&spec) {
                Ok(s) => s,
                Err((code, msg)) => {
                    eprintln!("{msg}");
                    return ExitCode::from(code);
                }
            };
            let out_dir = parsed.output_dir.clone().map(PathBuf::from).unwrap_or(out);
            let opts = RunOptions {
                seed_override: seed,
                workers,
                output_dir: Some(out_dir),
            };
            match scenario::run(&parsed, &opts) {
                Ok(report) => {
                    print!("{}", report.render());
                    if let Some(dir) = &report.output_dir {
                        println!("reports in {}", dir.display());
                    }
                    if report.any_rejected() {
                        ExitCode::from(EXIT_REJECTED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(RunnerError::Invalid(diags)) => {
                    for d in &diags {
                        eprintln!("{d}");
                    }
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e @ RunnerError::Numeric { .. }) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_NUMERIC)
                }
                Err(RunnerError::Io(e)) => {
                    eprintln!("i/o error: {e}");
                    ExitCode::from(EXIT_NUMERIC)
                }
            }
        }
    }
}
