//! `terrafill`: dataset preparation, training, sampling, inpainting,
//! evaluation and mesh export as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "terrafill",
    version,
    about = "Heightmap void filling with diffusion inpainting and classical baselines"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the resolved configuration and progress.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand)]
pub enum Command {
    /// Cut normalized crops from a grid file or from synthetic terrain.
    Prepare(commands::PrepareArgs),
    /// Generate line masks as PBM files.
    GenMasks(commands::GenMasksArgs),
    /// Train a denoiser on a directory of grids.
    Train(commands::TrainArgs),
    /// Draw unconditional samples from a checkpoint.
    Sample(commands::SampleArgs),
    /// Fill the masked pixels of one grid.
    Inpaint(commands::InpaintArgs),
    /// Paired comparison of all methods on a generated corpus.
    Evaluate(commands::EvaluateArgs),
    /// Triangulate a grid into an OBJ mesh.
    ExportMesh(commands::ExportMeshArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
