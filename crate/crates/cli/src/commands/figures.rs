use cvconv_core::analytic::{e_ln_cv, e_ln_qubits, e_residual, e_tmsv, e_transferred};
use cvconv_core::entanglement::{
    entropy_of_entanglement, log_negativity_from_spectrum, werner_log_negativity_cv,
    werner_register_pt_spectrum,
};
use cvconv_core::evolution::{forward_convert, forward_convert_werner, DEFAULT_DEFECT_THRESHOLD};
use cvconv_core::states::{make_tmsv, make_werner, TmsvParams};
use rayon::prelude::*;
use serde::Serialize;

use super::{choose_cutoff, grid, Outcome};
use crate::args::{Figure1Args, Figure2Args, TruncationArgs};
use crate::error::{CliError, CliResult};
use crate::output::{emit, Format, Table};

/// Pair counts plotted in both figures.
pub const FIGURE_PAIRS: u32 = 8;

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Serialize)]
pub struct Figure1Meta<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub mode: Mode,
    pub config: &'a Figure1Args,
    pub columns: &'a [String],
    pub row_count: usize,
    pub number_format: &'static str,
    /// `(r, e_residual(8, tanh r), fraction of e_tmsv)` per row.
    pub residual_k8: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize)]
pub struct Figure2Meta<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub mode: Mode,
    pub config: &'a Figure2Args,
    pub columns: &'a [String],
    pub row_count: usize,
    pub number_format: &'static str,
    /// `E_LN_cv > 0` exactly for `lambda` above this value.
    pub inseparable_above_lambda: f64,
}

#[derive(Serialize)]
struct WithTable<'a, M: Serialize> {
    #[serde(flatten)]
    meta: &'a M,
    rows: &'a [Vec<Option<f64>>],
}

const NUMBER_FORMAT: &str = "shortest round-trip after rounding to 12 significant digits";

fn emit_figure<M: Serialize>(
    out: Option<&std::path::Path>,
    format: Option<Format>,
    meta: &M,
    table: &Table,
) -> CliResult<()> {
    match format.unwrap_or(Format::Csv) {
        Format::Csv => emit(out, Format::Csv, meta, table),
        Format::Json => {
            let full = WithTable {
                meta,
                rows: &table.rows,
            };
            emit(out, Format::Json, &full, table)
        }
    }
}

pub fn figure1_columns() -> Vec<String> {
    let mut columns = vec!["r".to_string(), "lambda".into(), "E_cv".into()];
    columns.extend((1..=FIGURE_PAIRS).map(|k| format!("E_K{k}")));
    columns
}

pub fn figure2_columns() -> Vec<String> {
    let mut columns = vec!["lambda".to_string(), "E_LN_cv".into()];
    columns.extend((1..=FIGURE_PAIRS).map(|k| format!("E_LNCD_K{k}")));
    columns
}

fn figure1_row(r: f64, numeric: bool, truncation: &TruncationArgs) -> CliResult<Vec<f64>> {
    let params = TmsvParams::from_r(r)?;
    let lambda = params.lambda();
    let mut row = vec![r, lambda];
    if numeric {
        let cutoff = choose_cutoff(None, FIGURE_PAIRS, &[lambda], &[], truncation.tolerance)?;
        let input = make_tmsv(params, cutoff, truncation.policy())?;
        let conversion = forward_convert(&input, FIGURE_PAIRS, DEFAULT_DEFECT_THRESHOLD)?;
        row.push(entropy_of_entanglement(&input)?);
        let mut cumulative = 0.0;
        for pair in &conversion.pairs {
            cumulative += entropy_of_entanglement(pair)?;
            row.push(cumulative);
        }
    } else {
        row.push(e_tmsv(lambda)?);
        for k in 1..=FIGURE_PAIRS {
            row.push(e_transferred(k, lambda)?);
        }
    }
    Ok(row)
}

pub fn figure1_table(args: &Figure1Args) -> CliResult<Table> {
    if args.r_min < 0.0 {
        return Err(CliError::Usage(format!(
            "--r-min must be >= 0, got {}",
            args.r_min
        )));
    }
    let rs = grid(args.r_min, args.r_max, args.steps)?;
    let rows = rs
        .par_iter()
        .map(|&r| figure1_row(r, args.numeric, &args.truncation))
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(figure1_columns());
    for row in rows {
        table.push_values(&row);
    }
    Ok(table)
}

pub fn run_figure1(args: &Figure1Args) -> CliResult<Outcome> {
    let table = figure1_table(args)?;
    let residual_k8 = table
        .rows
        .iter()
        .map(|row| {
            let (r, lambda, total) = (row[0].unwrap(), row[1].unwrap(), row[2].unwrap());
            let residual = e_residual(FIGURE_PAIRS, lambda)?;
            let fraction = if total > 0.0 { residual / total } else { 0.0 };
            Ok([r, residual, fraction])
        })
        .collect::<CliResult<Vec<_>>>()?;
    let meta = Figure1Meta {
        command: "figure1",
        version: env!("CARGO_PKG_VERSION"),
        mode: if args.numeric {
            Mode::Numeric
        } else {
            Mode::ClosedForm
        },
        config: args,
        columns: &table.columns,
        row_count: table.rows.len(),
        number_format: NUMBER_FORMAT,
        residual_k8,
    };
    emit_figure(
        args.output.out.as_deref(),
        args.output.format,
        &meta,
        &table,
    )?;
    Ok(Outcome { passed: true })
}

fn figure2_row(
    p: f64,
    lambda: f64,
    numeric: bool,
    truncation: &TruncationArgs,
) -> CliResult<Vec<f64>> {
    let mut row = vec![lambda];
    if numeric {
        row.push(werner_log_negativity_cv(p, lambda, lambda)?.0);
        let cutoff = choose_cutoff(
            None,
            FIGURE_PAIRS,
            &[lambda],
            &[lambda],
            truncation.tolerance,
        )?;
        let state = make_werner(p, lambda, lambda, cutoff, truncation.policy())?;
        let conversion = forward_convert_werner(&state, FIGURE_PAIRS, DEFAULT_DEFECT_THRESHOLD)?;
        for k in 1..=FIGURE_PAIRS as usize {
            let spectrum = werner_register_pt_spectrum(
                p,
                &conversion.pure.pairs[..k],
                &conversion.thermal.pairs[..k],
            )?;
            row.push(log_negativity_from_spectrum(&spectrum)?);
        }
    } else {
        row.push(e_ln_cv(p, lambda)?);
        for k in 1..=FIGURE_PAIRS {
            row.push(e_ln_qubits(p, lambda, k)?);
        }
    }
    Ok(row)
}

pub fn figure2_table(args: &Figure2Args) -> CliResult<Table> {
    if !(0.0..=1.0).contains(&args.p) {
        return Err(CliError::Usage(format!(
            "--p must lie in [0, 1], got {}",
            args.p
        )));
    }
    if args.lambda_min < 0.0 || args.lambda_max >= 1.0 {
        return Err(CliError::Usage(format!(
            "lambda range [{}, {}] must lie in [0, 1)",
            args.lambda_min, args.lambda_max
        )));
    }
    let lambdas = grid(args.lambda_min, args.lambda_max, args.steps)?;
    let rows = lambdas
        .par_iter()
        .map(|&l| figure2_row(args.p, l, args.numeric, &args.truncation))
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(figure2_columns());
    for row in rows {
        table.push_values(&row);
    }
    Ok(table)
}

pub fn run_figure2(args: &Figure2Args) -> CliResult<Outcome> {
    let table = figure2_table(args)?;
    let meta = Figure2Meta {
        command: "figure2",
        version: env!("CARGO_PKG_VERSION"),
        mode: if args.numeric {
            Mode::Numeric
        } else {
            Mode::ClosedForm
        },
        config: args,
        columns: &table.columns,
        row_count: table.rows.len(),
        number_format: NUMBER_FORMAT,
        inseparable_above_lambda: 1.0 - 2.0 * args.p,
    };
    emit_figure(
        args.output.out.as_deref(),
        args.output.format,
        &meta,
        &table,
    )?;
    Ok(Outcome { passed: true })
}
