//! `phgrid`: certify, solve, and simulate multi-machine power networks
//! described by TOML scenario files.
//!
//! Exit codes: 0 success, 1 failed runs or unwritable artifacts,
//! 2 certificate failure, 3 solver failure, 64 bad input.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;
mod output;

use commands::{Format, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "phgrid",
    version,
    about = "Transient-stability toolkit for multi-machine power networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the stability certificate of every generator
    Certify {
        /// Scenario file
        config: PathBuf,
    },
    /// Solve the steady operating point and print every starred quantity
    Equilibrium {
        /// Scenario file
        config: PathBuf,
        /// Output layout
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Integrate disturbed runs, writing one CSV per run plus summary.csv
    Simulate {
        /// Scenario file
        config: PathBuf,
        /// Directory receiving run_*.csv and summary.csv
        #[arg(long)]
        out: PathBuf,
        /// Horizon (s)
        #[arg(long, default_value_t = 2.0)]
        t_end: f64,
        /// Fixed integration step (s)
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Seed for the disturbance draws
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sampled initial states
        #[arg(long, default_value_t = 25)]
        runs: usize,
        /// Record every k-th step in the CSVs
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Worker threads for the batch (0 uses every available core)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// One explicit initial state: freq_hz, I_x, I_y, I_z per generator,
        /// comma separated, rotor angles taken from the operating point
        #[arg(long)]
        initial: Option<String>,
    },
    /// Combined operating-point and certificate report
    Report {
        /// Scenario file
        config: PathBuf,
        /// Write the report to this file instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHGRID_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match &cli.command {
        Command::Certify { config } => commands::certify(config),
        Command::Equilibrium { config, format } => commands::equilibrium(config, *format),
        Command::Simulate { config, out, t_end, dt, seed, runs, stride, jobs, initial } => {
            let args = SimulateArgs {
                t_end: *t_end,
                dt: *dt,
                seed: *seed,
                runs: *runs,
                stride: *stride,
                jobs: *jobs,
                initial: initial.clone(),
            };
            commands::simulate(config, out, &args)
        }
        Command::Report { config, out } => commands::report(config, out.as_deref()),
    };

    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
