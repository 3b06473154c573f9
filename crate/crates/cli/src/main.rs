//! `vvrkhs`: verification suites and rate experiments for multi-task
//! regularization networks.
//!
//! Exit codes: 0 success, 1 check failure, 2 config or input error,
//! 3 hypothesis violation.

mod approx;
mod problem;
mod rate;
mod solve;
mod spectral;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "vvrkhs", version, about = "Multi-task regularization networks in vector-valued RKHS")]
struct Cli {
    /// JSON config; every field has a default unless noted in the README.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the identity and invariant checks on one kernel and space.
    Verify,
    /// Monte Carlo learning-rate experiment over the (n, m) grid.
    Rate,
    /// Fit a model to a dataset CSV, or re-predict from a saved model.
    Solve,
    /// Dump the integral operator's eigenvalues.
    Spectral,
    /// Sweep the approximation error against its bound.
    Approx,
}

/// Shared run options.
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl RunOptions {
    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// Whether every check a command ran passed.
pub type Outcome = anyhow::Result<bool>;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<vvrkhs::Error>() {
            return match e {
                vvrkhs::Error::Hypothesis(_) => 3,
                vvrkhs::Error::Numerical(_) | vvrkhs::Error::Range(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions { config: cli.config, out: cli.out, seed: cli.seed, quiet: cli.quiet };
    let result = match cli.command {
        Command::Verify => verify::run(&opts),
        Command::Rate => rate::run(&opts),
        Command::Solve => solve::run(&opts),
        Command::Spectral => spectral::run(&opts),
        Command::Approx => approx::run(&opts),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
