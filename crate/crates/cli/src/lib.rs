//! Command-line front end for field/qubit-pair entanglement conversion.
//!
//! Exit codes: 0 on success, 1 when a verification check or threshold
//! fails, 2 for malformed input or configuration.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;

pub use commands::{run, Outcome};
pub use error::{CliError, CliResult, EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION};
