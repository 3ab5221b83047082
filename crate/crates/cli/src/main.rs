use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "glpin", version, about = "Pinned Ginzburg-Landau vortex experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (defaults to the config's `output`, then `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Reject unknown configuration keys instead of warning.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Pinning geometry operations.
    Pinning {
        #[command(subcommand)]
        command: PinningCommand,
    },
    /// Solve for the scalar profile U at every epsilon.
    SolveU(Common),
    /// Minimize F at every epsilon and write the order parameter.
    Minimize(Common),
    /// Minimize, then detect zeros, classify discs and run the separation.
    Analyze(Common),
    /// Ring energies in both modes.
    Ring(Common),
    /// Perforated-domain phase problems.
    Perforated(Common),
    /// Renormalized energy by both routes.
    Renorm(Common),
    /// Cell problems, homogenized matrix and homogenized phase.
    Homogenize(Common),
    /// Full quantization pipeline, persisted as a run record.
    Quantization(Common),
    /// Energy expansion sweep, persisted as a run record.
    Expansion(Common),
    /// Plot-data bundle from run records.
    Plots {
        #[command(flatten)]
        common: Common,
        /// Run record JSON files.
        records: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PinningCommand {
    /// Sample the pinning term on the grid.
    Build(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Pinning { command: PinningCommand::Build(c) } => c,
        Command::SolveU(c)
        | Command::Minimize(c)
        | Command::Analyze(c)
        | Command::Ring(c)
        | Command::Perforated(c)
        | Command::Renorm(c)
        | Command::Homogenize(c)
        | Command::Quantization(c)
        | Command::Expansion(c) => c,
        Command::Plots { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Pinning { command: PinningCommand::Build(c) } => commands::pinning_build(c),
        Command::SolveU(c) => commands::solve_u(c),
        Command::Minimize(c) => commands::minimize(c),
        Command::Analyze(c) => commands::analyze(c),
        Command::Ring(c) => commands::ring(c),
        Command::Perforated(c) => commands::perforated(c),
        Command::Renorm(c) => commands::renorm(c),
        Command::Homogenize(c) => commands::homogenize(c),
        Command::Quantization(c) => commands::quantization(c),
        Command::Expansion(c) => commands::expansion(c),
        Command::Plots { common, records } => commands::plots(common, records),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
