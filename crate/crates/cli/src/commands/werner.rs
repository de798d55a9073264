use cvconv_core::analytic::{e_ln_cv, e_ln_qubits, ln_threshold, ln_threshold_qubits};
use cvconv_core::entanglement::{
    converted_werner_pt_spectrum, log_negativity_from_spectrum, pt_eigenvalues,
    werner_log_negativity_cv, werner_pt_spectrum_cv, WernerNormalization,
};
use cvconv_core::evolution::forward_convert_werner;
use cvconv_core::states::{make_werner, TailWeight};
use serde::Serialize;

use super::{check_pair_count, choose_cutoff, Outcome};
use crate::args::WernerArgs;
use crate::error::{CliError, CliResult};
use crate::output::{emit, Format, Table};

/// Agreement required between independently computed spectra.
pub const SPECTRUM_TOLERANCE: f64 = 1e-10;
/// Agreement required between closed forms and spectrum sums.
pub const FORMULA_TOLERANCE: f64 = 1e-9;
/// Largest pair count for the dense cross-check.
pub const DENSE_CHECK_MAX_PAIRS: u32 = 3;

pub const NO_SIGNATURE: &str = "no distillable signature (LN)";

#[derive(Debug, Serialize)]
pub struct LnValue {
    pub value: f64,
    pub min_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct WernerReport {
    pub command: &'static str,
    pub p: f64,
    pub lambda: f64,
    pub v: f64,
    pub pair_count: u32,
    pub cutoff: usize,
    pub truncation_tail: f64,
    /// Inseparability threshold on `p`, present when `v = lambda`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// NPT threshold on `p` for the converted pairs, present when `v = lambda`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converted_threshold: Option<f64>,
    /// Field state, untruncated spectrum.
    pub field: LnValue,
    pub field_levels: usize,
    /// Converted pairs, spectrum assembled from the simulated pair data.
    pub converted: LnValue,
    /// Truncated eigenvalue lists at `2^K` levels per side.
    pub converted_formula: f64,
    pub spectrum_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_defect: Option<f64>,
    pub passed: bool,
}

fn note(value: f64) -> Option<&'static str> {
    (value <= 0.0).then_some(NO_SIGNATURE)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn report(args: &WernerArgs) -> CliResult<WernerReport> {
    check_pair_count(args.pairs)?;
    let lambda = args.squeezing.params()?.lambda();
    let v = args.v.unwrap_or(lambda);
    let p = args.p;
    let symmetric = v == lambda;
    let cutoff = choose_cutoff(
        args.cutoff,
        args.pairs,
        &[lambda],
        &[v],
        args.truncation.tolerance,
    )?;
    let state = make_werner(p, lambda, v, cutoff, args.truncation.policy())?;
    let conversion = forward_convert_werner(&state, args.pairs, args.defect_threshold)?;

    let (field_ln, field_levels) = werner_log_negativity_cv(p, lambda, v)?;
    let field_spectrum =
        werner_pt_spectrum_cv(p, lambda, v, field_levels, WernerNormalization::Untruncated)?;
    let converted_spectrum = converted_werner_pt_spectrum(&conversion)?;
    let converted_ln = log_negativity_from_spectrum(&converted_spectrum)?;
    let formula_spectrum = werner_pt_spectrum_cv(
        p,
        lambda,
        v,
        1 << args.pairs,
        WernerNormalization::Truncated,
    )?;
    let converted_formula = log_negativity_from_spectrum(&formula_spectrum)?;
    let structured = converted_spectrum.sorted_values();
    let spectrum_defect = max_diff(&structured, &formula_spectrum.sorted_values());

    let dense_defect = if args.pairs <= DENSE_CHECK_MAX_PAIRS {
        let side = 1usize << args.pairs;
        let mut dense = pt_eigenvalues(&conversion.qubit_density()?, (side, side))?;
        dense.sort_by(f64::total_cmp);
        Some(max_diff(&structured, &dense))
    } else {
        None
    };

    let threshold = symmetric.then(|| ln_threshold(lambda));
    let converted_threshold = if symmetric {
        Some(ln_threshold_qubits(lambda, args.pairs)?)
    } else {
        None
    };
    let field_closed = if symmetric {
        Some(e_ln_cv(p, lambda)?)
    } else {
        None
    };
    let converted_closed = if symmetric {
        Some(e_ln_qubits(p, lambda, args.pairs)?)
    } else {
        None
    };

    // closed forms equal the spectrum sums only above the NPT thresholds
    let formula_ok =
        |closed: Option<f64>, threshold: Option<f64>, value: f64| match (closed, threshold) {
            (Some(c), Some(t)) if p > t => (c - value).abs() < FORMULA_TOLERANCE,
            _ => true,
        };
    let passed = spectrum_defect < SPECTRUM_TOLERANCE
        && dense_defect.is_none_or(|d| d < SPECTRUM_TOLERANCE)
        && formula_ok(field_closed, threshold, field_ln)
        && formula_ok(converted_closed, converted_threshold, converted_ln);

    Ok(WernerReport {
        command: "werner",
        p,
        lambda,
        v,
        pair_count: args.pairs,
        cutoff: cutoff.levels(),
        truncation_tail: state.tail_weight(),
        threshold,
        converted_threshold,
        field: LnValue {
            value: field_ln,
            min_eigenvalue: field_spectrum.min_eigenvalue(),
            closed_form: field_closed,
            note: note(field_ln),
        },
        field_levels,
        converted: LnValue {
            value: converted_ln,
            min_eigenvalue: converted_spectrum.min_eigenvalue(),
            closed_form: converted_closed,
            note: note(converted_ln),
        },
        converted_formula,
        spectrum_defect,
        dense_defect,
        passed,
    })
}

pub fn table(report: &WernerReport) -> Table {
    let mut table = Table::new([
        "p",
        "lambda",
        "v",
        "pairs",
        "E_LN_cv",
        "E_LN_cv_closed_form",
        "E_LNCD",
        "E_LNCD_closed_form",
        "min_eigenvalue_cv",
        "min_eigenvalue_cd",
    ]);
    table.push(vec![
        Some(report.p),
        Some(report.lambda),
        Some(report.v),
        Some(report.pair_count as f64),
        Some(report.field.value),
        report.field.closed_form,
        Some(report.converted.value),
        report.converted.closed_form,
        Some(report.field.min_eigenvalue),
        Some(report.converted.min_eigenvalue),
    ]);
    table
}

pub fn run(args: &WernerArgs) -> CliResult<Outcome> {
    if !(0.0..=1.0).contains(&args.p) {
        return Err(CliError::Usage(format!(
            "--p must lie in [0, 1], got {}",
            args.p
        )));
    }
    let report = report(args)?;
    let format = args.output.format.unwrap_or(Format::Json);
    emit(args.output.out.as_deref(), format, &report, &table(&report))?;
    for (label, value) in [("field", &report.field), ("converted", &report.converted)] {
        if let Some(n) = value.note {
            eprintln!("{label}: LN = {:.6}, {n}", value.value);
        }
    }
    Ok(Outcome {
        passed: report.passed,
    })
}
