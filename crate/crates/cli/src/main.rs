use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geopref_cli::{commands, CliError, ExperimentConfig, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "geopref", version = concat!("v", env!("CARGO_PKG_VERSION")))]
#[command(about = "Geometric preferential attachment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seeds; overrides `sim.seeds`
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Threads for running seeds in parallel
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Understate the kernel suprema in coupled runs (negative control)
    #[arg(long, global = true, hide = true)]
    fault_inject: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Limiting measure and fitness of a space
    Equilibrium,
    /// Grow graphs for each seed; trajectories and degree tables
    Simulate,
    /// Coupled continuous and dustbin runs with domination and bracket checks
    CoupledCheck,
    /// Fitness phase, λ₀ and the discretised cross-check
    Fitness,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(&path)?;
    let out_dir = cli
        .out_dir
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let opts = RunOptions {
        out_dir,
        seeds: cli.seeds,
        jobs: cli.jobs,
        fault_inject: cli.fault_inject,
    };
    match cli.command {
        Command::Equilibrium => commands::equilibrium(&cfg, &opts),
        Command::Simulate => commands::simulate(&cfg, &opts),
        Command::CoupledCheck => commands::coupled_check(&cfg, &opts),
        Command::Fitness => commands::fitness(&cfg, &opts),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
