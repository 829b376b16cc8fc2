//! `flsim` command-line front end.

mod commands;
mod config;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;
use error::{exit, CliError};

#[derive(Parser)]
#[command(name = "flsim", version, about = "Federated averaging over simulated wireless networks")]
#[command(after_help = "Exit codes: 0 success, 2 usage, 3 invalid input, 4 runtime failure, 5 bound check failed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation, or several replicas with --replicas.
    Run(RunArgs),
    /// Run every point of a parameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep spec; defaults to the config's `sweep` entry.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Check the convergence bounds on a replicated run.
    Analyze {
        /// Output directory of a replicated `run`.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Parse and validate a topology document.
    ValidateTopology {
        #[arg(long)]
        topology: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Topology document; overrides the config.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "FLSIM_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Stop clients whose battery is exhausted.
    #[arg(long)]
    enforce_battery: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            topology: self.topology.clone(),
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            replicas: self.replicas,
            enforce_battery: self.enforce_battery,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => commands::run(&config::load(&args.config, &args.overrides())?),
        Command::Sweep { run, sweep } => {
            let res = config::load(&run.config, &run.overrides())?;
            let spec = match sweep {
                Some(path) => serde_json::from_str(&config::read_text(&path)?)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
                None => res.sweep.clone().unwrap_or_default(),
            };
            commands::sweep(&res, &spec)
        }
        Command::Analyze { report, run } => {
            let res = config::load(&run.config, &run.overrides())?;
            commands::analyze(&res, &report, run.out.as_deref(), run.replicas)
        }
        Command::ValidateTopology { topology } => commands::validate_topology(&topology),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
