//! Command-line front end: run experiments from config files, replay
//! results files, and list the registries.
//!
//! Exit codes: 0 success; 2 configuration/validation error; 3 numerical
//! assertion failure; 4 I/O or serialization error; 5 version mismatch;
//! 7 reproduce found mismatching fields.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emlab::config::ExperimentConfig;
use emlab::drift::builtin_names;
use emlab::quadrature::functional_names;
use emlab::runner::{outputs_pass, reproduce_file, run_to_dir};
use emlab::LabError;

#[derive(Parser)]
#[command(name = "emlab", version, about = "Strong-convergence laboratory for the Euler-Maruyama scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the worker count (0 = process-global pool).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory for results.json and the CSV tables.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-execute the config embedded in a results file and compare.
    Reproduce {
        /// Path to a results.json produced by `run`.
        results: PathBuf,
    },
    /// List the builtin drifts.
    ListDrifts,
    /// List the builtin test functionals.
    ListFunctionals,
}

fn exit_code_for(err: &LabError) -> u8 {
    match err {
        LabError::InvalidConfig(_)
        | LabError::InvalidGrid(_)
        | LabError::UnknownDrift(_)
        | LabError::UnknownFunctional(_)
        | LabError::Inadmissible(_) => 2,
        LabError::Numerical(_) => 3,
        LabError::Io(_) | LabError::Json(_) => 4,
        LabError::VersionMismatch(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, LabError> {
    match cli.command {
        Command::Run { config, seed, workers, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut config = ExperimentConfig::from_json(&text)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(workers) = workers {
                config.workers = workers;
            }
            let (result, written) = run_to_dir(&config, &out)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            println!(
                "{}: seed {}, wall clock {} ms",
                result.kind, result.config.seed, result.wall_clock_ms
            );
            for fit in &result.rate_fits {
                println!(
                    "  fit [{v:?}]: slope {s:.4} (se {e:.4}, R^2 {r:.4})",
                    v = fit.variant,
                    s = fit.slope,
                    e = fit.slope_standard_error,
                    r = fit.r_squared
                );
            }
            if outputs_pass(&result.outputs) {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("numerical checks FAILED; inspect results.json");
                Ok(ExitCode::from(3))
            }
        }
        Command::Reproduce { results } => {
            let verdict = reproduce_file(&results)?;
            if verdict.identical {
                println!("verdict: identical");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verdict: MISMATCH in {} field(s)", verdict.mismatched_fields.len());
                for field in &verdict.mismatched_fields {
                    println!("  {field}");
                }
                Ok(ExitCode::from(7))
            }
        }
        Command::ListDrifts => {
            for (name, description) in builtin_names() {
                println!("{name:12} {description}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListFunctionals => {
            for (name, description) in functional_names() {
                println!("{name:22} {description}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
