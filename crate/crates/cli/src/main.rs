//! `nclab`: train networks with linear heads, evaluate collapse bounds, run
//! depth sweeps and the verification suites.

mod artifacts;
mod commands;
mod config;
mod error;
mod evaluate;

use clap::{Parser, Subcommand};
use commands::Axis;
use nclab_core::verify::{Faults, Level};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nclab", version, about = "Neural-collapse lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration and write its artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the bounds of a finished run and rewrite its report.json.
    Bounds {
        #[arg(long)]
        run: PathBuf,
    },
    /// Train one member per (value, seed) and collect final metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Concurrent members; 0 uses every core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites.
    Verify {
        #[arg(long, default_value = "fast")]
        level: Level,
        /// Also write failing counterexamples to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Print the JSON schema of run configurations.
    Schema,
}

fn run(cli: Cli) -> error::CliResult<()> {
    match cli.cmd {
        Cmd::Train { config, out } => commands::cmd_train(&config, out.as_deref()),
        Cmd::Bounds { run } => commands::cmd_bounds(&run),
        Cmd::Sweep {
            config,
            axis,
            values,
            seeds,
            jobs,
            out,
        } => commands::cmd_sweep(&config, axis, &values, &seeds, jobs, out.as_deref()),
        Cmd::Verify {
            level,
            dump,
            inject_fault,
        } => {
            let faults = match inject_fault.as_deref() {
                None => Faults::default(),
                Some("flip-gradient-sign") => Faults {
                    flip_gradient_sign: true,
                },
                Some(other) => return Err(error::CliError::Config(format!("unknown fault {other:?}"))),
            };
            commands::cmd_verify(level, &faults, dump.as_deref())
        }
        Cmd::Schema => {
            print!("{}", config::SCHEMA_JSON);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nclab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
