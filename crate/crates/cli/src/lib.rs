//! Batch front end: GE curves, phase diagrams, optimal rank and verification.
//!
//! Every output is a pure function of the validated [`RunConfig`]; reruns
//! with the same flags produce byte-identical files.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
mod commands;
mod output;
mod verify;

use std::io;
use std::path::PathBuf;

pub use args::{Cli, Command, Format, RunConfig};
pub use commands::{run_ge_curve, run_optimal_rank, run_phase_diagram};
pub use verify::{run_verify, CheckOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] epca_core::Error),
}

impl CliError {
    /// 0 success, 1 check failure, 2 usage error, 3 I/O error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(epca_core::Error::Argument(_) | epca_core::Error::Domain(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Validates the parsed command line and dispatches it.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = args::validate(&cli.command)?;
    match cli.command {
        Command::GeCurve(_) => run_ge_curve(&cfg),
        Command::PhaseDiagram(_) => run_phase_diagram(&cfg),
        Command::OptimalRank(_) => run_optimal_rank(&cfg),
        Command::Verify(_) => {
            let outcomes = run_verify(&cfg)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(failed.join(", ")))
            }
        }
    }
}
