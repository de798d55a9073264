pub mod figures;
pub mod forward;
pub mod reverse;
pub mod verify;
pub mod werner;

use cvconv_core::states::FockCutoff;
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult};

/// Whether every threshold checked by a command held.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub passed: bool,
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Forward(args) => forward::run(args),
        Command::Reverse(args) => reverse::run(args),
        Command::Werner(args) => werner::run(args),
        Command::Figure1(args) => figures::run_figure1(args),
        Command::Figure2(args) => figures::run_figure2(args),
        Command::Verify(args) => verify::run(args),
    }
}

/// Largest pair count the commands accept.
pub const MAX_PAIRS: u32 = 12;
/// Largest cutoff chosen automatically.
pub const MAX_AUTO_CUTOFF: usize = 1 << 16;

pub(crate) fn check_pair_count(pairs: u32) -> CliResult<()> {
    if (1..=MAX_PAIRS).contains(&pairs) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--pairs must be between 1 and {MAX_PAIRS}, got {pairs}"
        )))
    }
}

/// Tail weight `λ^(2N)` of a squeezed vacuum truncated at `N` levels.
pub(crate) fn tmsv_tail(lambda: f64, levels: usize) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        (2.0 * levels as f64 * lambda.ln()).exp()
    }
}

/// Tail weight `1 - (1 - v^N)^2` of a thermal state truncated at `N` levels.
pub(crate) fn thermal_tail(v: f64, levels: usize) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        let single = (levels as f64 * v.ln()).exp();
        -(2.0 * (-single).ln_1p()).exp_m1()
    }
}

/// The explicit cutoff, checked against `pairs`, or the smallest multiple of
/// `2^pairs` whose tails stay within `tolerance`.
pub(crate) fn choose_cutoff(
    explicit: Option<usize>,
    pairs: u32,
    lambdas: &[f64],
    thermal: &[f64],
    tolerance: f64,
) -> CliResult<FockCutoff> {
    if let Some(levels) = explicit {
        let cutoff = FockCutoff::new(levels)?;
        cutoff.check_pairs(pairs)?;
        return Ok(cutoff);
    }
    let stride = (1usize << pairs).max(2);
    let fits = |n: usize| {
        lambdas.iter().all(|&l| tmsv_tail(l, n) <= tolerance)
            && thermal.iter().all(|&v| thermal_tail(v, n) <= tolerance)
    };
    let mut levels = stride;
    while !fits(levels) {
        levels += stride;
        if levels > MAX_AUTO_CUTOFF {
            return Err(CliError::Usage(format!(
                "no cutoff up to {MAX_AUTO_CUTOFF} keeps the tail below {tolerance:e}; \
                 pass --cutoff with --allow-truncation"
            )));
        }
    }
    Ok(FockCutoff::new(levels)?)
}

/// `[re, im]` pairs for JSON output.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Complex(pub [f64; 2]);

impl From<cvconv_core::C64> for Complex {
    fn from(z: cvconv_core::C64) -> Self {
        Complex([z.re, z.im])
    }
}

/// Evenly spaced grid with both endpoints exact.
pub(crate) fn grid(min: f64, max: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps < 2 || min.is_nan() || max.is_nan() || min >= max {
        return Err(CliError::Usage(format!(
            "need at least 2 steps over an increasing range, got {steps} over [{min}, {max}]"
        )));
    }
    let last = steps - 1;
    Ok((0..steps)
        .map(|i| {
            if i == last {
                max
            } else {
                min + (max - min) * i as f64 / last as f64
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn automatic_cutoff() {
        let c = choose_cutoff(None, 3, &[0.0], &[], 1e-12).unwrap();
        assert_eq!(c.levels(), 8);
        // 0.5^(2N) <= 1e-12 needs N >= 20
        let c = choose_cutoff(None, 2, &[0.5], &[], 1e-12).unwrap();
        assert_eq!(c.levels(), 20);
        let c = choose_cutoff(None, 3, &[0.5], &[0.5], 1e-12).unwrap();
        assert!(c.levels().is_multiple_of(8) && thermal_tail(0.5, c.levels()) <= 1e-12);
        assert!(thermal_tail(0.5, c.levels() - 8) > 1e-12);
        assert!(choose_cutoff(Some(6), 3, &[], &[], 1e-12).is_err());
        assert_eq!(
            choose_cutoff(Some(512), 4, &[0.6], &[], 1e-12)
                .unwrap()
                .levels(),
            512
        );
    }

    #[test]
    fn tails() {
        assert!((thermal_tail(0.5, 8) - (1.0 - (1.0 - 0.5f64.powi(8)).powi(2))).abs() < 1e-16);
        assert!((tmsv_tail(0.9, 256) / 0.9f64.powi(512) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = grid(0.0, 3.0, 61).unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[60], 3.0);
        assert_eq!(g[40], 2.0);
        assert!(grid(1.0, 1.0, 3).is_err());
    }
}
