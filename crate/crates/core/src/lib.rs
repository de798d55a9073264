//! Entanglement conversion between a two-mode continuous-variable field and a
//! series of qubit pairs.
//!
//! * [`states`]: truncated field states, qubit pairs and the Werner mixture.
//! * [`evolution`]: forward and reverse conversion by closed-form block
//!   rotations, plus a dense oracle.
//! * [`entanglement`]: entropy of entanglement and logarithmic negativity.
//! * [`analytic`]: closed-form reference values.

pub mod analytic;
pub mod entanglement;
pub mod error;
pub mod evolution;
pub mod random;
pub mod states;

pub use error::{Error, Result};
pub use states::C64;
