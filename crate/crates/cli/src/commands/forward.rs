use cvconv_core::analytic::{e_pair, e_residual, e_tmsv};
use cvconv_core::entanglement::entropy_of_entanglement;
use cvconv_core::evolution::forward_convert;
use cvconv_core::states::{make_tmsv, QubitPairState, TailWeight};
use serde::Serialize;

use super::{check_pair_count, choose_cutoff, Outcome};
use crate::args::ForwardArgs;
use crate::error::CliResult;
use crate::output::{emit, Format, Table};

/// Largest accepted gap between output and input entanglement.
pub const CONSERVATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Serialize)]
pub struct StepSummary {
    pub step: u32,
    pub factorization_defect: f64,
    pub residual_norm: f64,
    pub tail_weight: f64,
}

#[derive(Debug, Serialize)]
pub struct ForwardReport {
    pub command: &'static str,
    pub lambda: f64,
    pub r: f64,
    pub pair_count: u32,
    pub cutoff: usize,
    pub truncation_tail: f64,
    /// Extracted pairs, readable by `reverse`.
    pub pairs: Vec<QubitPairState>,
    pub pair_entropy: Vec<f64>,
    pub pair_entropy_closed_form: Vec<f64>,
    pub residual_entropy: f64,
    pub residual_entropy_closed_form: f64,
    pub input_entropy: f64,
    pub input_entropy_closed_form: f64,
    /// `|sum of pair entropies + residual entropy - input entropy|` on the truncated input.
    pub conservation_defect: f64,
    /// Same sum against the untruncated closed form.
    pub closed_form_defect: f64,
    pub defect_threshold: f64,
    pub max_factorization_defect: f64,
    pub steps: Vec<StepSummary>,
    pub passed: bool,
}

pub fn report(args: &ForwardArgs) -> CliResult<ForwardReport> {
    check_pair_count(args.pairs)?;
    let params = args.squeezing.params()?;
    let lambda = params.lambda();
    let cutoff = choose_cutoff(
        args.cutoff,
        args.pairs,
        &[lambda],
        &[],
        args.truncation.tolerance,
    )?;
    let input = make_tmsv(params, cutoff, args.truncation.policy())?;
    let conversion = forward_convert(&input, args.pairs, args.defect_threshold)?;

    let pair_entropy = conversion
        .pairs
        .iter()
        .map(entropy_of_entanglement)
        .collect::<Result<Vec<_>, _>>()?;
    let pair_entropy_closed_form = (1..=args.pairs)
        .map(|k| e_pair(k, lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let residual_entropy = entropy_of_entanglement(&conversion.residual)?;
    let input_entropy = entropy_of_entanglement(&input)?;
    let input_entropy_closed_form = e_tmsv(lambda)?;
    let output_total = pair_entropy.iter().sum::<f64>() + residual_entropy;
    let conservation_defect = (output_total - input_entropy).abs();

    Ok(ForwardReport {
        command: "forward",
        lambda,
        r: params.r(),
        pair_count: args.pairs,
        cutoff: cutoff.levels(),
        truncation_tail: input.tail_weight(),
        pair_entropy,
        pair_entropy_closed_form,
        residual_entropy,
        residual_entropy_closed_form: e_residual(args.pairs, lambda)?,
        input_entropy,
        input_entropy_closed_form,
        conservation_defect,
        closed_form_defect: (output_total - input_entropy_closed_form).abs(),
        defect_threshold: args.defect_threshold,
        max_factorization_defect: conversion.report.max_defect(),
        steps: conversion
            .report
            .steps
            .iter()
            .map(|s| StepSummary {
                step: s.step,
                factorization_defect: s.defect,
                residual_norm: s.residual_norm,
                tail_weight: s.tail_weight,
            })
            .collect(),
        pairs: conversion.pairs,
        passed: conservation_defect < CONSERVATION_TOLERANCE,
    })
}

pub fn table(report: &ForwardReport) -> Table {
    let mut table = Table::new([
        "k",
        "a_mm_re",
        "a_mm_im",
        "a_mp_re",
        "a_mp_im",
        "a_pm_re",
        "a_pm_im",
        "a_pp_re",
        "a_pp_im",
        "entropy",
        "entropy_closed_form",
        "factorization_defect",
        "residual_norm",
    ]);
    for (i, pair) in report.pairs.iter().enumerate() {
        let a = pair.amplitudes().expect("forward pairs are pure");
        let mut row = vec![(i + 1) as f64];
        for z in a {
            row.extend([z.re, z.im]);
        }
        let step = &report.steps[i];
        row.extend([
            report.pair_entropy[i],
            report.pair_entropy_closed_form[i],
            step.factorization_defect,
            step.residual_norm,
        ]);
        table.push_values(&row);
    }
    table
}

pub fn run(args: &ForwardArgs) -> CliResult<Outcome> {
    let report = report(args)?;
    let format = args.output.format.unwrap_or(Format::Json);
    emit(args.output.out.as_deref(), format, &report, &table(&report))?;
    if !report.passed {
        eprintln!(
            "conservation defect {:e} exceeds {:e}",
            report.conservation_defect, CONSERVATION_TOLERANCE
        );
    }
    Ok(Outcome {
        passed: report.passed,
    })
}
