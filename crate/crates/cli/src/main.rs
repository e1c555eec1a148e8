//! `bfdr`: Bayes factors, null-proportion bounds and FDR decisions from the
//! command line, plus the simulation studies.

mod bf;
mod error;
mod fdr;
mod sim;
mod table;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bfdr::OmegaGrid;
use error::{usage, Result};

#[derive(Debug, Parser)]
#[command(
    name = "bfdr",
    version,
    about = "Robust Bayesian FDR control with Bayes factors"
)]
struct Cli {
    /// Mirror the report as a JSON document on standard output.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute Bayes factors from (z, se) or from phenotype/genotype files.
    Bf(bf::BfArgs),
    /// Estimate pi0 and decide which tests to reject.
    Fdr(fdr::FdrArgs),
    /// Run simulation scenario I or II and score every procedure.
    Sim(sim::SimArgs),
}

/// Prior effect-size grid shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Comma-separated prior standard deviations of the effect size.
    #[arg(
        long = "omega-grid",
        value_delimiter = ',',
        default_value = "0.1,0.2,0.4,0.8,1.6"
    )]
    omega: Vec<f64>,
}

impl GridArgs {
    pub fn grid(&self) -> Result<OmegaGrid> {
        OmegaGrid::new(self.omega.clone()).map_err(|e| usage(e.to_string()))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Bf(args) => bf::run(&args, cli.json),
        Command::Fdr(args) => fdr::run(&args, cli.json),
        Command::Sim(args) => sim::run(&args, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bfdr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
