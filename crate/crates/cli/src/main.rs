//! `cvtomo`: stage-by-stage driver for simulated homodyne tomography.

mod config;
mod error;
mod manifest;
mod stages;

use clap::{Parser, Subcommand};

use crate::config::StageArgs;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "cvtomo", version, about = "Simulated continuous-variable quantum state tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact Wigner function of the configured state (wigner.csv + heatmap)
    Generate(StageArgs),
    /// Homodyne sinogram by Radon transform plus Gaussian noise (sinogram.csv)
    Measure(StageArgs),
    /// Filtered back-projection and its Fock-basis density (recon_wigner.csv, rho_fbp.json)
    Reconstruct(StageArgs),
    /// Physical density matrix fitted to the sinogram (rho_est.json)
    Estimate(StageArgs),
    /// Fidelity, purity, marginals and PPT verdict (analysis.json)
    Analyze {
        #[command(flatten)]
        args: StageArgs,
        /// include the PPT entanglement test on the state's covariance matrix
        #[arg(long)]
        ppt: bool,
    },
    /// Reconstruction error against the truth for a list of cutoffs
    SweepCutoff(StageArgs),
    /// PPT entanglement test of a Gaussian covariance matrix
    Ppt(StageArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => stages::generate(&a.resolve()?),
        Command::Measure(a) => stages::measure(&a.resolve()?),
        Command::Reconstruct(a) => stages::reconstruct(&a.resolve()?),
        Command::Estimate(a) => stages::estimate_stage(&a.resolve()?),
        Command::Analyze { args, ppt } => stages::analyze(&args.resolve()?, ppt),
        Command::SweepCutoff(a) => stages::sweep(&a.resolve()?),
        Command::Ppt(a) => stages::ppt_stage(&a.resolve()?),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("cvtomo: {e}");
        std::process::exit(e.exit_code());
    }
}
