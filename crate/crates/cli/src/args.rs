use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvconv_core::evolution::DEFAULT_DEFECT_THRESHOLD;
use cvconv_core::states::{TmsvParams, Truncation, DEFAULT_TAIL_TOLERANCE};
use serde::Serialize;

use crate::error::CliResult;
use crate::output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "cvconv",
    version,
    about = "Entanglement conversion between a two-mode field and qubit pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a two-mode squeezed vacuum into K qubit pairs.
    Forward(ForwardArgs),
    /// Write qubit pairs back into the field.
    Reverse(ReverseArgs),
    /// Logarithmic negativity of the Werner mixture before and after conversion.
    Werner(WernerArgs),
    /// Entanglement transferred into K = 1..8 pairs versus squeezing.
    Figure1(Figure1Args),
    /// Werner logarithmic negativity for K = 1..8 pairs versus lambda.
    Figure2(Figure2Args),
    /// Run verification suites and report each check.
    Verify(VerifyArgs),
}

/// Squeezing given as `lambda` or as `r` with `lambda = tanh r`.
#[derive(Args, Debug, Clone, Serialize)]
#[group(required = true, multiple = false)]
pub struct Squeezing {
    /// Squeezing amplitude in [0, 1).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Squeezing parameter r >= 0.
    #[arg(long)]
    pub r: Option<f64>,
}

impl Squeezing {
    pub fn params(&self) -> CliResult<TmsvParams> {
        Ok(match (self.lambda, self.r) {
            (Some(l), None) => TmsvParams::from_lambda(l)?,
            (None, Some(r)) => TmsvParams::from_r(r)?,
            _ => unreachable!("clap enforces exactly one of --lambda and --r"),
        })
    }
}

/// Optional squeezing reference, used by `reverse --roundtrip`.
#[derive(Args, Debug, Clone, Serialize)]
#[group(required = false, multiple = false)]
pub struct ReferenceSqueezing {
    /// Squeezing amplitude of the round-trip reference.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Squeezing parameter of the round-trip reference.
    #[arg(long)]
    pub r: Option<f64>,
}

impl ReferenceSqueezing {
    pub fn params(&self) -> CliResult<Option<TmsvParams>> {
        Ok(match (self.lambda, self.r) {
            (Some(l), None) => Some(TmsvParams::from_lambda(l)?),
            (None, Some(r)) => Some(TmsvParams::from_r(r)?),
            _ => None,
        })
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TruncationArgs {
    /// Largest truncation tail weight accepted for constructed field states.
    #[arg(long, default_value_t = DEFAULT_TAIL_TOLERANCE)]
    pub tolerance: f64,
    /// Accept a tail weight above --tolerance (it is still reported).
    #[arg(long)]
    pub allow_truncation: bool,
}

impl TruncationArgs {
    pub fn policy(&self) -> Truncation {
        Truncation {
            tolerance: self.tolerance,
            allow_excess: self.allow_truncation,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputArgs {
    /// Output file; stdout when omitted. CSV output also writes `<name>.meta.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub squeezing: Squeezing,
    /// Number of qubit pairs K.
    #[arg(long)]
    pub pairs: u32,
    /// Fock levels per mode; a multiple of 2^K. Chosen from --tolerance when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Largest accepted factorization defect per step.
    #[arg(long, default_value_t = DEFAULT_DEFECT_THRESHOLD)]
    pub defect_threshold: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReverseArgs {
    /// Pairs JSON: `{"pairs": [...]}` or `{"pairs_density": [...]}`.
    pub input: PathBuf,
    /// Fock levels per mode of the output; a multiple of 2^K, default 2^K.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Report fidelity with the truncated squeezed vacuum the pairs came from.
    #[arg(long)]
    pub roundtrip: bool,
    #[command(flatten)]
    pub reference: ReferenceSqueezing,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct WernerArgs {
    /// Weight of the squeezed vacuum in the mixture.
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub squeezing: Squeezing,
    /// Thermal parameter; defaults to lambda.
    #[arg(long)]
    pub v: Option<f64>,
    /// Number of qubit pairs K.
    #[arg(long, default_value_t = 3)]
    pub pairs: u32,
    /// Fock levels per mode; a multiple of 2^K. Chosen from --tolerance when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Largest accepted factorization defect per step.
    #[arg(long, default_value_t = DEFAULT_DEFECT_THRESHOLD)]
    pub defect_threshold: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Figure1Args {
    #[arg(long, default_value_t = 0.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub r_max: f64,
    /// Number of rows, endpoints included.
    #[arg(long, default_value_t = 61)]
    pub steps: usize,
    /// Simulate every row instead of evaluating closed forms.
    #[arg(long)]
    pub numeric: bool,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Figure2Args {
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 0.95)]
    pub lambda_max: f64,
    /// Number of rows, endpoints included.
    #[arg(long, default_value_t = 96)]
    pub steps: usize,
    /// Compute every row from partial-transpose spectra of simulated states.
    #[arg(long)]
    pub numeric: bool,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Unitarity,
    Conservation,
    Roundtrip,
    Werner,
    Formulas,
    All,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    /// Seed for the random inputs of the unitarity and roundtrip suites.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Random joint states compared against the dense oracle.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}
