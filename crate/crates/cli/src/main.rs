#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use privdyn_core::AccountingError;

mod commands;
mod config;
mod output;

/// Last-iterate Rényi DP accounting for noisy mini-batch gradient descent.
#[derive(Debug, Parser)]
#[command(name = "privdyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one bound as a JSON record.
    Bound(commands::BoundArgs),
    /// Emit `k,eps` CSV curves for several bounds and orders.
    Curve(commands::CurveArgs),
    /// Solve for the noise scale (or epoch budget) meeting an (ε, δ) target.
    Calibrate(commands::CalibrateArgs),
    /// Convert RDP to (ε, δ)-DP or restate a guarantee for another neighboring notion.
    Convert(commands::ConvertArgs),
    /// Check the bounds against the exact Gaussian oracle.
    Verify(commands::VerifyArgs),
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files or parameters: exit code 2.
    Input { name: String, message: String },
    /// A verification check did not hold: exit code 1.
    Verification { name: String, message: String },
}

impl CliError {
    pub fn input(name: &str, message: impl Into<String>) -> Self {
        Self::Input {
            name: name.to_string(),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Input { .. } => 2,
            Self::Verification { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input { name, message } | Self::Verification { name, message } => {
                write!(f, "{name}: {message}")
            }
        }
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        let (name, message) = (e.name().to_string(), e.to_string());
        match e {
            AccountingError::DominanceViolated { .. } | AccountingError::StatisticalMismatch { .. } => {
                Self::Verification { name, message }
            }
            _ => Self::Input { name, message },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(args) => commands::bound(args),
        Command::Curve(args) => commands::curve(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Convert(args) => commands::convert(args),
        Command::Verify(args) => commands::verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
