use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cvconv_core::entanglement::{entropy_of_entanglement, log_negativity_dense};
use cvconv_core::evolution::{reverse_convert, reverse_phase_audit, CvOutput, PhaseMismatch};
use cvconv_core::states::{make_tmsv, FockCutoff, QubitPairState, TmsvParams, Truncation};
use cvconv_core::C64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_pair_count, Complex, Outcome};
use crate::args::ReverseArgs;
use crate::error::{CliError, CliResult};
use crate::output::{emit, Format, Table};

/// Largest accepted gap between the output entanglement and the pair sum.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-8;
/// Smallest accepted round-trip fidelity is `1 - ROUNDTRIP_TOLERANCE`.
pub const ROUNDTRIP_TOLERANCE: f64 = 1e-10;
/// Agreement required between the closed form and the stepwise reverse.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;

/// Contents of a pairs file. Other keys (such as a full forward report) are ignored.
#[derive(Debug, Deserialize)]
struct PairsFile {
    pairs: Option<Vec<QubitPairState>>,
    pairs_density: Option<Vec<QubitPairState>>,
    lambda: Option<f64>,
}

/// Parsed pairs and the squeezing recorded alongside them, if any.
#[derive(Debug)]
pub struct PairsInput {
    pub pairs: Vec<QubitPairState>,
    pub lambda: Option<f64>,
}

pub fn parse_pairs(text: &str) -> Result<PairsInput, String> {
    let file: PairsFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let pairs = match (file.pairs, file.pairs_density) {
        (Some(pairs), None) => {
            if let Some(i) = pairs.iter().position(|p| !p.is_pure()) {
                return Err(format!(
                    "entry {i} of \"pairs\" is a density; use \"pairs_density\" for mixed pairs"
                ));
            }
            pairs
        }
        (None, Some(pairs)) => {
            if let Some(i) = pairs.iter().position(QubitPairState::is_pure) {
                return Err(format!(
                    "entry {i} of \"pairs_density\" has 4 amplitudes; expected 16 density entries"
                ));
            }
            pairs
        }
        (Some(_), Some(_)) => {
            return Err("give either \"pairs\" or \"pairs_density\", not both".into())
        }
        (None, None) => return Err("missing \"pairs\" or \"pairs_density\"".into()),
    };
    if pairs.is_empty() {
        return Err("pair list is empty".into());
    }
    Ok(PairsInput {
        pairs,
        lambda: file.lambda,
    })
}

pub fn read_pairs(path: &Path) -> CliResult<PairsInput> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pairs(&text).map_err(|message| CliError::Input {
        path: path.to_path_buf(),
        message,
    })
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StateReport {
    /// Nonzero amplitudes as `[m, n, re, im]`.
    Pure { entries: Vec<[f64; 4]> },
    /// Row-major density over the index `m * cutoff + n`.
    Mixed { density: Vec<Complex> },
}

#[derive(Debug, Serialize)]
pub struct Additivity {
    /// Entropy (pure) or logarithmic negativity (mixed) of each pair.
    pub pair_values: Vec<f64>,
    pub pair_sum: f64,
    pub field_value: f64,
    pub defect: f64,
}

#[derive(Debug, Serialize)]
pub struct MismatchReport {
    pub n: usize,
    pub m: usize,
    pub ratio: Complex,
    pub digits: Vec<(usize, usize)>,
}

impl From<&PhaseMismatch> for MismatchReport {
    fn from(m: &PhaseMismatch) -> Self {
        Self {
            n: m.n,
            m: m.m,
            ratio: m.ratio.into(),
            digits: m.digits.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClosedFormReport {
    pub fidelity: f64,
    pub global_phase: Complex,
    pub mismatches: Vec<MismatchReport>,
}

#[derive(Debug, Serialize)]
pub struct RoundTrip {
    pub lambda: f64,
    pub fidelity: f64,
}

#[derive(Debug, Serialize)]
pub struct ReverseReport {
    pub command: &'static str,
    pub pair_count: usize,
    pub cutoff: usize,
    pub measure: &'static str,
    pub state: StateReport,
    pub additivity: Additivity,
    pub leftover_excitation: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedFormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundTrip>,
    pub passed: bool,
}

fn pair_log_negativity(pair: &QubitPairState) -> CliResult<f64> {
    let rho = pair.density();
    let dense = DMatrix::from_fn(4, 4, |i, j| rho[(i, j)]);
    Ok(log_negativity_dense(&dense, (2, 2))?)
}

pub fn report(args: &ReverseArgs, input: PairsInput) -> CliResult<ReverseReport> {
    let count = input.pairs.len();
    check_pair_count(count as u32)?;
    let register = 1usize << count;
    let cutoff = FockCutoff::new(args.cutoff.unwrap_or(register))?;
    cutoff.check_pairs(count as u32)?;
    let levels = cutoff.levels();

    let reference = if args.roundtrip {
        let params = match (args.reference.params()?, input.lambda) {
            (Some(p), _) => p,
            (None, Some(l)) => TmsvParams::from_lambda(l)?,
            (None, None) => {
                return Err(CliError::Usage(
                    "--roundtrip needs --lambda/--r or a \"lambda\" field in the pairs file".into(),
                ))
            }
        };
        // the register holds the squeezed vacuum truncated at 2^K levels
        let target = make_tmsv(params, FockCutoff::new(register)?, Truncation::permissive())?;
        Some((params.lambda(), target))
    } else {
        None
    };

    let conversion = reverse_convert(&input.pairs, cutoff)?;
    let pure_input = input.pairs.iter().all(QubitPairState::is_pure);

    let (measure, state, field_value, pair_values, fidelity) = match &conversion.state {
        CvOutput::Pure(psi) => {
            let pair_values = input
                .pairs
                .iter()
                .map(entropy_of_entanglement)
                .collect::<Result<Vec<_>, _>>()?;
            let entries = psi
                .iter()
                .map(|((m, n), a)| [m as f64, n as f64, a.re, a.im])
                .collect();
            let fidelity = reference.as_ref().map(|(_, target)| {
                let overlap: C64 = target
                    .iter()
                    .map(|((m, n), t)| t.conj() * psi.coeff(m, n))
                    .sum();
                overlap.norm_sqr()
            });
            (
                "entropy",
                StateReport::Pure { entries },
                entropy_of_entanglement(psi)?,
                pair_values,
                fidelity,
            )
        }
        CvOutput::Mixed(rho) => {
            let pair_values = input
                .pairs
                .iter()
                .map(pair_log_negativity)
                .collect::<CliResult<Vec<_>>>()?;
            let fidelity = reference.as_ref().map(|(_, target)| {
                let entries: Vec<_> = target.iter().collect();
                let mut total = C64::new(0.0, 0.0);
                for &((m, n), a) in &entries {
                    for &((m2, n2), b) in &entries {
                        total += a.conj() * rho.matrix[(m * levels + n, m2 * levels + n2)] * b;
                    }
                }
                total.re
            });
            (
                "log_negativity",
                StateReport::Mixed {
                    density: rho.matrix.transpose().iter().map(|&z| z.into()).collect(),
                },
                log_negativity_dense(&rho.matrix, (levels, levels))?,
                pair_values,
                fidelity,
            )
        }
    };

    let closed_form = if pure_input {
        let audit = reverse_phase_audit(&input.pairs, CLOSED_FORM_TOLERANCE)?;
        Some(ClosedFormReport {
            fidelity: audit.fidelity,
            global_phase: audit.global_phase.into(),
            mismatches: audit.mismatches.iter().map(Into::into).collect(),
        })
    } else {
        None
    };

    let pair_sum: f64 = pair_values.iter().sum();
    let defect = (field_value - pair_sum).abs();
    let roundtrip = reference
        .zip(fidelity)
        .map(|((lambda, _), fidelity)| RoundTrip { lambda, fidelity });

    let passed = defect < ADDITIVITY_TOLERANCE
        && closed_form.as_ref().is_none_or(|c| {
            c.mismatches.is_empty() && (1.0 - c.fidelity).abs() < CLOSED_FORM_TOLERANCE
        })
        && roundtrip
            .as_ref()
            .is_none_or(|r| r.fidelity >= 1.0 - ROUNDTRIP_TOLERANCE);

    Ok(ReverseReport {
        command: "reverse",
        pair_count: count,
        cutoff: levels,
        measure,
        state,
        additivity: Additivity {
            pair_values,
            pair_sum,
            field_value,
            defect,
        },
        leftover_excitation: conversion.leftover,
        closed_form,
        roundtrip,
        passed,
    })
}

pub fn table(report: &ReverseReport, cutoff: usize) -> Table {
    match &report.state {
        StateReport::Pure { entries } => {
            let mut table = Table::new(["m", "n", "re", "im"]);
            for e in entries {
                table.push_values(e);
            }
            table
        }
        StateReport::Mixed { density } => {
            let dim = cutoff * cutoff;
            let mut nonzero = BTreeMap::new();
            for (idx, z) in density.iter().enumerate() {
                if z.0 != [0.0, 0.0] {
                    nonzero.insert((idx / dim, idx % dim), z.0);
                }
            }
            let mut table = Table::new(["row", "col", "re", "im"]);
            for ((row, col), [re, im]) in nonzero {
                table.push_values(&[row as f64, col as f64, re, im]);
            }
            table
        }
    }
}

pub fn run(args: &ReverseArgs) -> CliResult<Outcome> {
    let input = read_pairs(&args.input)?;
    let report = report(args, input)?;
    let format = args.output.format.unwrap_or(Format::Json);
    emit(
        args.output.out.as_deref(),
        format,
        &report,
        &table(&report, report.cutoff),
    )?;
    if !report.passed {
        eprintln!("reverse conversion checks failed; see the report");
    }
    Ok(Outcome {
        passed: report.passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_file_shapes() {
        let ok = parse_pairs(r#"{"pairs": [[[1,0],[0,0],[0,0],[0,0]]], "lambda": 0.5}"#).unwrap();
        assert_eq!(ok.pairs.len(), 1);
        assert_eq!(ok.lambda, Some(0.5));
        let err = parse_pairs(r#"{"pairs": [[[1,0],[0,0],[0,0]]]}"#).unwrap_err();
        assert!(err.contains("got 3"), "{err}");
        assert!(parse_pairs(r#"{"pairs": []}"#).is_err());
        assert!(parse_pairs(r#"{}"#).is_err());
        let identity: Vec<String> = (0..16)
            .map(|i| {
                if i % 5 == 0 {
                    "[0.25,0]".into()
                } else {
                    "[0,0]".into()
                }
            })
            .collect();
        let text = format!(r#"{{"pairs_density": [[{}]]}}"#, identity.join(","));
        assert!(!parse_pairs(&text).unwrap().pairs[0].is_pure());
        let text = format!(r#"{{"pairs": [[{}]]}}"#, identity.join(","));
        assert!(parse_pairs(&text).is_err());
    }
}
