mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "bayeslink",
    version,
    about = "Bayesian record linkage of two files"
)]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample linkages and parameters for two files.
    Link {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pool an estimate over sampled linkages.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a simulation design.
    Simulate(SimulateArgs),
    /// Convergence report for a trace file.
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct SimulateArgs {
    #[command(subcommand)]
    table: Option<SimulateTable>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the blocked scenario at each error rate of the design.
    #[arg(long)]
    blocked: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimulateTable {
    /// Print the KL divergence grid.
    KlTable {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Link {
            config,
            seed,
            output,
        } => commands::cmd_link(&config, seed, output, threads),
        Command::Analyze { config, output } => commands::cmd_analyze(&config, output),
        Command::Simulate(args) => match (args.table, args.config) {
            (Some(SimulateTable::KlTable { output }), _) => commands::cmd_kl_table(output),
            (None, Some(config)) => {
                commands::cmd_simulate(&config, args.blocked, args.seed, args.output)
            }
            (None, None) => Err(CliError::Usage(
                "simulate needs --config or the kl-table subcommand".into(),
            )),
        },
        Command::Diagnose { trace, output } => commands::cmd_diagnose(&trace, output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
