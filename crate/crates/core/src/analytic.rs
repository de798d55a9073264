//! Closed-form entanglement values, evaluated without touching the simulation.
//!
//! All logarithms are base 2. Terms of the form `x log x` with `x -> 0` take
//! their limit 0, so `lambda = 0` is allowed everywhere.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{check_probability, check_unit_interval_open, Error, Result};

fn check_pairs(name: &'static str, k: u32) -> Result<()> {
    if (1..=1000).contains(&k) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value: k as f64,
            expected: "1 <= k <= 1000",
        })
    }
}

/// `(λ^(2^j), 1 - λ^(2^j))`, accurate when `λ^(2^j)` is close to 1.
fn tower(lambda: f64, j: u32) -> (f64, f64) {
    if lambda == 0.0 {
        return (0.0, 1.0);
    }
    let exponent = 2f64.powi(j as i32) * lambda.ln();
    (exponent.exp(), -exponent.exp_m1())
}

/// Entropy of entanglement of the two-mode squeezed vacuum,
/// `cosh²r log cosh²r - sinh²r log sinh²r`.
pub fn e_tmsv(lambda: f64) -> Result<f64> {
    check_unit_interval_open("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let denom = (1.0 - lambda) * (1.0 + lambda);
    let cosh2 = 1.0 / denom;
    let sinh2 = lambda * lambda / denom;
    Ok(cosh2 * cosh2.log2() - sinh2 * sinh2.log2())
}

/// Entanglement of the `k`-th extracted pair,
/// `log(1 + λ^(2^k)) - λ^(2^k)/(1 + λ^(2^k)) 2^k log λ`.
pub fn e_pair(k: u32, lambda: f64) -> Result<f64> {
    check_pairs("k", k)?;
    check_unit_interval_open("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let (x, _) = tower(lambda, k);
    Ok(x.ln_1p() / LN_2 - x / (1.0 + x) * 2f64.powi(k as i32) * lambda.log2())
}

/// Entanglement carried by the first `pairs` qubit pairs (closed sum).
pub fn e_transferred(pairs: u32, lambda: f64) -> Result<f64> {
    check_pairs("pairs", pairs)?;
    check_unit_interval_open("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let (y, one_minus_y) = tower(lambda, pairs + 1);
    let l2 = lambda * lambda;
    let one_minus_l2 = (1.0 - lambda) * (1.0 + lambda);
    let log_term = (one_minus_y / one_minus_l2).log2();
    let bracket = l2 / one_minus_l2 - 2f64.powi(pairs as i32) * y / one_minus_y;
    Ok(log_term - bracket * l2.log2())
}

/// Entanglement left in the field after `pairs` steps.
pub fn e_residual(pairs: u32, lambda: f64) -> Result<f64> {
    check_pairs("pairs", pairs)?;
    check_unit_interval_open("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let (y, one_minus_y) = tower(lambda, pairs + 1);
    Ok(-one_minus_y.log2() - 2f64.powi(pairs as i32 + 1) * y / one_minus_y * lambda.log2())
}

/// Logarithmic negativity of the CV Werner state with `v = λ`.
///
/// Raw value: negative below the inseparability threshold `p = (1-λ)/2`.
pub fn e_ln_cv(p: f64, lambda: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_unit_interval_open("lambda", lambda)?;
    let ratio = (1.0 + lambda) / (1.0 - lambda);
    Ok((p * ratio + (1.0 - p) / ratio).log2())
}

/// Logarithmic negativity after conversion into `pairs` qubit pairs, `v = λ`.
pub fn e_ln_qubits(p: f64, lambda: f64, pairs: u32) -> Result<f64> {
    check_probability("p", p)?;
    check_unit_interval_open("lambda", lambda)?;
    check_pairs("pairs", pairs)?;
    let ratio = (1.0 + lambda) / (1.0 - lambda);
    let (y, one_minus_y) = tower(lambda, pairs);
    let register = one_minus_y / (1.0 + y);
    Ok((p * ratio * register + (1.0 - p) / (ratio * register)).log2())
}

/// Inseparability threshold of the `v = λ` Werner state.
pub fn ln_threshold(lambda: f64) -> f64 {
    0.5 * (1.0 - lambda)
}

/// Inseparability threshold of the state converted into `pairs` pairs, `v = λ`.
///
/// Truncation to `2^K` levels weights the thermal blocks more heavily, so this
/// lies above [`ln_threshold`] and tends to it as `K` grows. [`e_ln_qubits`]
/// is the logarithmic negativity only for `p` above this value.
pub fn ln_threshold_qubits(lambda: f64, pairs: u32) -> Result<f64> {
    check_unit_interval_open("lambda", lambda)?;
    check_pairs("pairs", pairs)?;
    let (y, one_minus_y) = tower(lambda, pairs);
    let ratio = (1.0 - lambda) * (1.0 + y) / ((1.0 + lambda) * one_minus_y);
    Ok(ratio / (1.0 + ratio))
}

/// Both sides of `prod_{k=1..K} (1 + λ^(2^k)) = (1 - λ^(2^(K+1))) / (1 - λ²)`.
pub fn product_identity_sides(lambda: f64, pairs: u32) -> Result<(f64, f64)> {
    check_unit_interval_open("lambda", lambda)?;
    check_pairs("pairs", pairs)?;
    let lhs: f64 = (1..=pairs).map(|k| 1.0 + tower(lambda, k).0).product();
    let (_, one_minus_y) = tower(lambda, pairs + 1);
    let rhs = one_minus_y / ((1.0 - lambda) * (1.0 + lambda));
    Ok((lhs, rhs))
}

/// True when the product identity holds to 1e-12 relative accuracy.
pub fn product_identity_check(lambda: f64, pairs: u32) -> Result<bool> {
    let (lhs, rhs) = product_identity_sides(lambda, pairs)?;
    Ok((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0))
}

/// A closed form with its arguments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum Formula {
    Tmsv { lambda: f64 },
    Pair { k: u32, lambda: f64 },
    Transferred { pairs: u32, lambda: f64 },
    Residual { pairs: u32, lambda: f64 },
    LnCv { p: f64, lambda: f64 },
    LnQubits { p: f64, lambda: f64, pairs: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormulaResult {
    pub value: f64,
    #[serde(flatten)]
    pub formula: Formula,
}

impl Formula {
    pub fn id(&self) -> &'static str {
        match self {
            Formula::Tmsv { .. } => "e_tmsv",
            Formula::Pair { .. } => "e_pair",
            Formula::Transferred { .. } => "e_transferred",
            Formula::Residual { .. } => "e_residual",
            Formula::LnCv { .. } => "e_ln_cv",
            Formula::LnQubits { .. } => "e_ln_qubits",
        }
    }

    pub fn evaluate(self) -> Result<FormulaResult> {
        let value = match self {
            Formula::Tmsv { lambda } => e_tmsv(lambda),
            Formula::Pair { k, lambda } => e_pair(k, lambda),
            Formula::Transferred { pairs, lambda } => e_transferred(pairs, lambda),
            Formula::Residual { pairs, lambda } => e_residual(pairs, lambda),
            Formula::LnCv { p, lambda } => e_ln_cv(p, lambda),
            Formula::LnQubits { p, lambda, pairs } => e_ln_qubits(p, lambda, pairs),
        }?;
        Ok(FormulaResult {
            value,
            formula: self,
        })
    }
}
