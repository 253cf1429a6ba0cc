use std::path::PathBuf;
use std::process::ExitCode;

use byzsprt_cli::{info, load, run, CliError, Experiment, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzsprt", version, about = "Sequential detection with Byzantine sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(Common),
    /// Print the information constants and the equilibrium prediction.
    Info(Common),
    /// Compare plain and importance-sampled estimates with the exact oracle.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, trials: self.trials, output_dir: self.output_dir.clone() }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (common, force) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::Validate(c) => (c, Some(Experiment::Validate)),
        Command::Info(c) => {
            print!("{}", info(&load(&c.config, &c.overrides())?)?);
            return Ok(());
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let out = run(&common.config, &common.overrides(), force)?;
    println!("{}", out.csv.display());
    println!("{}", out.summary.display());
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("byzsprt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
