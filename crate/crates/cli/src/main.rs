//! `mifrecon` command-line front-end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mifrecon", version, about = "Learn and evaluate modified indicator functions for surface reconstruction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML file with one table per subcommand ([prepare], [train], ...).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Single-threaded, bitwise-reproducible run.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a directory of watertight meshes into a training dataset.
    Prepare(commands::PrepareArgs),
    /// Train the network on a prepared dataset.
    Train(commands::TrainArgs),
    /// Reconstruct a mesh from a point cloud with a trained checkpoint.
    Reconstruct(commands::ReconstructArgs),
    /// Classical baseline: contour the discrete Gauss integral of an oriented cloud.
    GaussRecon(commands::GaussArgs),
    /// Score reconstructions against ground-truth meshes.
    Eval(commands::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let threads = if cli.common.deterministic { Some(1) } else { cli.common.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let mut run = commands::Run::new(cli.common);
    let result = match cli.command {
        Command::Prepare(a) => run.prepare(a),
        Command::Train(a) => run.train(a),
        Command::Reconstruct(a) => run.reconstruct(a),
        Command::GaussRecon(a) => run.gauss_recon(a),
        Command::Eval(a) => run.eval(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary} ({} warning{})", run.warnings, if run.warnings == 1 { "" } else { "s" });
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
