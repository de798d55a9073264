use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range ({expected})")]
    Parameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("Fock cutoff must be at least 2, got {0}")]
    CutoffTooSmall(usize),

    #[error("Fock cutoff {cutoff} is not a multiple of {required}")]
    CutoffAlignment { cutoff: usize, required: usize },

    #[error("truncation tail weight {tail:e} exceeds tolerance {tolerance:e} at cutoff {cutoff}")]
    Truncation {
        tail: f64,
        tolerance: f64,
        cutoff: usize,
    },

    #[error("state is not normalized (squared norm {0})")]
    Normalization(f64),

    #[error(
        "step {step} requires support on multiples of {stride}; found amplitude {amplitude:e} at |{m},{n}>"
    )]
    Support {
        step: u32,
        stride: usize,
        m: usize,
        n: usize,
        amplitude: f64,
    },

    #[error("factorization defect {defect:e} at step {step} exceeds threshold {threshold:e}")]
    Factorization {
        step: u32,
        defect: f64,
        threshold: f64,
    },

    #[error("qubit pair {step} left with excitation weight {weight:e} after reverse step")]
    LeftoverExcitation { step: u32, weight: f64 },

    #[error("dense size guard: dimension {dim} exceeds limit {limit}")]
    SizeGuard { dim: usize, limit: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("invalid qubit pair state: {0}")]
    InvalidPair(String),

    #[error("partial-transpose spectrum does not sum to one (sum {0})")]
    SpectrumTrace(f64),

    #[error("empty pair list")]
    NoPairs,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval_open(name: &'static str, value: f64) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value,
            expected: "0 <= x < 1",
        })
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value,
            expected: "0 <= x <= 1",
        })
    }
}
