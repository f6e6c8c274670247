use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use graphon_sir_cli::{commands, Options};

#[derive(Parser)]
#[command(name = "gsir", version, about = "SIR dynamics on graphs and graphons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario.
    Simulate(Common),
    /// Error of sampled runs against a fine Galerkin reference.
    Converge(Common),
    /// Ensemble mean and variance over random graphs.
    Montecarlo(Common),
    /// Cut norm of a step graphon or of a sampled graph minus its Galerkin average.
    Cutnorm(Common),
    /// Export adjacency matrices, edge lists and degrees.
    Generate(Common),
}

fn run(cli: Cli) -> Result<()> {
    let (c, f): (&Common, fn(&Options) -> Result<commands::Report>) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Converge(c) => (c, commands::converge),
        Command::Montecarlo(c) => (c, commands::montecarlo),
        Command::Cutnorm(c) => (c, commands::cutnorm_cmd),
        Command::Generate(c) => (c, commands::generate),
    };
    if let Some(k) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let opts = Options {
        config: c.config.clone(),
        seed: c.seed,
        out: c.out.clone(),
    };
    let report = f(&opts)?;
    println!("{}", report.manifest_path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
