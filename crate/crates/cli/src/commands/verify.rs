use cvconv_core::analytic::{
    e_ln_cv, e_ln_qubits, e_pair, e_residual, e_tmsv, e_transferred, ln_threshold,
    ln_threshold_qubits, product_identity_sides,
};
use cvconv_core::entanglement::{
    converted_werner_pt_spectrum, entropy_of_entanglement, log_negativity_dense,
    log_negativity_from_spectrum, pt_eigenvalues, werner_log_negativity_cv, werner_pt_spectrum_cv,
    WernerNormalization,
};
use cvconv_core::evolution::{
    forward_convert, forward_convert_werner, reverse_convert, reverse_phase_audit, CouplingBlock,
    CvOutput, DenseStepOracle, Direction, JointState, Sides, DEFAULT_DEFECT_THRESHOLD,
};
use cvconv_core::random;
use cvconv_core::states::{
    make_tmsv, make_werner, FockCutoff, QubitPairState, TailWeight, TmsvParams, Truncation,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::Outcome;
use crate::args::{Suite, VerifyArgs};
use crate::error::{CliError, CliResult};
use crate::output::{emit, Format, Table};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    /// Passes when `measured < tolerance`.
    fn below(suite: Suite, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            passed: measured < tolerance,
            measured,
            tolerance,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub seed: u64,
    pub samples: usize,
    pub suites: Vec<Suite>,
    pub passed_count: usize,
    pub failed_count: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn selected(suite: Suite) -> Vec<Suite> {
    match suite {
        Suite::All => vec![
            Suite::Unitarity,
            Suite::Conservation,
            Suite::Roundtrip,
            Suite::Werner,
            Suite::Formulas,
        ],
        s => vec![s],
    }
}

fn tmsv(lambda: f64, levels: usize) -> CliResult<cvconv_core::states::PureCVState> {
    Ok(make_tmsv(
        TmsvParams::from_lambda(lambda)?,
        FockCutoff::new(levels)?,
        Truncation::permissive(),
    )?)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense oracle agreement, unitarity and block structure at cutoff 16.
pub fn unitarity(seed: u64, samples: usize) -> CliResult<Vec<Check>> {
    let suite = Suite::Unitarity;
    let cutoff = FockCutoff::new(16)?;
    let mut checks = Vec::new();
    let mut oracles = Vec::new();
    for k in 1..=4u32 {
        for direction in [Direction::Forward, Direction::Reverse] {
            let oracle = DenseStepOracle::new(cutoff, k, direction)?;
            let u = oracle.side_unitary();
            let id = DMatrix::identity(u.nrows(), u.ncols());
            let defect = (u * u.adjoint() - id).map(|z| z.norm()).max();
            checks.push(Check::below(
                suite,
                format!("unitarity k={k} {direction:?}"),
                defect,
                1e-12,
            ));
            oracles.push((k, direction, oracle));
        }

        let h = DenseStepOracle::generator(cutoff, k);
        let coupled = (0..h.nrows())
            .filter(|&i| h.row(i).iter().any(|&x| x != 0.0))
            .count();
        let blocks = CouplingBlock::enumerate(k, cutoff).count();
        let singletons = h.nrows() - coupled;
        let stride = 1usize << (k - 1);
        let mismatch = coupled.abs_diff(2 * blocks) + singletons.abs_diff(2 * stride);
        checks.push(
            Check::below(
                suite,
                format!("block structure k={k}"),
                mismatch as f64,
                0.5,
            )
            .with_detail(format!(
                "{blocks} two-level blocks, {singletons} uncoupled states"
            )),
        );
    }

    let mut rng = random::rng(seed);
    let mut worst = 0.0f64;
    for i in 0..samples {
        let (k, direction, oracle) = &oracles[i % oracles.len()];
        let v = random::random_joint_vector(&mut rng, cutoff);
        let dense = oracle.apply_vector(&v, Sides::Both)?;
        let blocks = JointState::from_dense(cutoff, &v)?
            .apply_step(*k, *direction)?
            .to_dense();
        let diff = (dense - blocks)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    checks.push(
        Check::below(suite, "oracle equivalence", worst, 1e-12)
            .with_detail(format!("{samples} random joint states, seed {seed}")),
    );
    Ok(checks)
}

/// Numeric conservation and per-pair formula match on the λ × K grid.
pub fn conservation() -> CliResult<Vec<Check>> {
    let suite = Suite::Conservation;
    let points: Vec<(f64, u32)> = (1..=9)
        .flat_map(|i| (1..=8).map(move |k| (i as f64 / 10.0, k)))
        .collect();
    let results = points
        .par_iter()
        .map(|&(lambda, count)| -> CliResult<[Check; 2]> {
            let input = tmsv(lambda, (1 << count) * 32)?;
            let conversion = forward_convert(&input, count, DEFAULT_DEFECT_THRESHOLD)?;
            let mut total = entropy_of_entanglement(&conversion.residual)?;
            let mut pair_gap = 0.0f64;
            for (i, pair) in conversion.pairs.iter().enumerate() {
                let e = entropy_of_entanglement(pair)?;
                total += e;
                pair_gap = pair_gap.max((e - e_pair(i as u32 + 1, lambda)?).abs());
            }
            let numeric_input = entropy_of_entanglement(&input)?;
            let closed_gap = (total - e_tmsv(lambda)?).abs();
            let label = format!("lambda={lambda} K={count}");
            Ok([
                Check::below(
                    suite,
                    format!("conservation {label}"),
                    (total - numeric_input).abs(),
                    1e-8,
                )
                .with_detail(format!(
                    "against untruncated closed form {closed_gap:e}, tail {:e}",
                    input.tail_weight()
                )),
                Check::below(suite, format!("pair formula {label}"), pair_gap, 1e-10),
            ])
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Round-trip fidelity, reverse additivity and closed-form agreement.
pub fn roundtrip(seed: u64) -> CliResult<Vec<Check>> {
    let suite = Suite::Roundtrip;
    let mut checks = Vec::new();
    for &lambda in &[0.3, 0.6, 0.9] {
        for count in 1..=6u32 {
            let input = tmsv(lambda, 1 << count)?;
            let fwd = forward_convert(&input, count, DEFAULT_DEFECT_THRESHOLD)?;
            let CvOutput::Pure(back) = reverse_convert(&fwd.pairs, input.cutoff())?.state else {
                unreachable!("pure pairs give a pure state")
            };
            checks.push(Check::below(
                suite,
                format!("round trip lambda={lambda} K={count}"),
                1.0 - back.fidelity(&input),
                1e-10,
            ));
        }
    }

    let mut rng = random::rng(seed);
    let (mut additivity, mut closed, mut mismatches) = (0.0f64, 0.0f64, 0usize);
    for i in 0..100 {
        let count = 1 + i % 4;
        let pairs: Vec<_> = (0..count)
            .map(|_| random::random_pure_pair(&mut rng))
            .collect();
        let sum = pairs
            .iter()
            .map(entropy_of_entanglement)
            .sum::<Result<f64, _>>()?;
        let CvOutput::Pure(out) = reverse_convert(&pairs, FockCutoff::new(1 << count)?)?.state
        else {
            unreachable!("pure pairs give a pure state")
        };
        additivity = additivity.max((entropy_of_entanglement(&out)? - sum).abs());
        let audit = reverse_phase_audit(&pairs, 1e-10)?;
        closed = closed.max((1.0 - audit.fidelity).abs());
        mismatches += audit.mismatches.len();
    }
    checks.push(
        Check::below(suite, "reverse additivity (pure)", additivity, 1e-8)
            .with_detail(format!("100 random pair lists, K <= 4, seed {seed}")),
    );
    let mut check = Check::below(suite, "closed form vs stepwise reverse", closed, 1e-10)
        .with_detail(format!("{mismatches} mismatched amplitudes"));
    check.passed &= mismatches == 0;
    checks.push(check);

    let mut mixed = 0.0f64;
    for i in 0..12 {
        let count = 1 + i % 3;
        let pairs: Vec<_> = (0..count)
            .map(|_| random::random_mixed_pair(&mut rng))
            .collect();
        let mut sum = 0.0;
        for pair in &pairs {
            let rho = pair.density();
            sum += log_negativity_dense(&DMatrix::from_fn(4, 4, |i, j| rho[(i, j)]), (2, 2))?;
        }
        let levels = 1usize << count;
        let CvOutput::Mixed(rho) = reverse_convert(&pairs, FockCutoff::new(levels)?)?.state else {
            unreachable!("mixed pairs give a density")
        };
        mixed = mixed.max((log_negativity_dense(&rho.matrix, (levels, levels))? - sum).abs());
    }
    checks.push(
        Check::below(suite, "reverse additivity (mixed, LN)", mixed, 1e-8)
            .with_detail("12 random density lists, K <= 3"),
    );

    let blanks = vec![QubitPairState::blank(); 2];
    let CvOutput::Pure(vacuum) = reverse_convert(&blanks, FockCutoff::new(4)?)?.state else {
        unreachable!("pure pairs give a pure state")
    };
    checks.push(Check::below(
        suite,
        "blank pairs give the vacuum",
        1.0 - vacuum.coeff(0, 0).norm_sqr(),
        1e-15,
    ));
    Ok(checks)
}

/// Werner spectra against dense eigensolves, closed forms and the threshold.
pub fn werner() -> CliResult<Vec<Check>> {
    let suite = Suite::Werner;
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut checks = Vec::new();
    for count in 1..=3u32 {
        let side = 1usize << count;
        let cutoff = FockCutoff::new(side * 4)?;
        let (mut spectra, mut formula) = (0.0f64, 0.0f64);
        for &p in &grid {
            for &lambda in &grid {
                let state = make_werner(p, lambda, lambda, cutoff, Truncation::permissive())?;
                let conversion = forward_convert_werner(&state, count, DEFAULT_DEFECT_THRESHOLD)?;
                let mut dense = pt_eigenvalues(&conversion.qubit_density()?, (side, side))?;
                dense.sort_by(f64::total_cmp);
                let lists =
                    werner_pt_spectrum_cv(p, lambda, lambda, side, WernerNormalization::Truncated)?
                        .sorted_values();
                let structured = converted_werner_pt_spectrum(&conversion)?.sorted_values();
                spectra = spectra
                    .max(max_abs_diff(&lists, &dense))
                    .max(max_abs_diff(&structured, &dense));
                if p > ln_threshold_qubits(lambda, count)? {
                    let spectrum = werner_pt_spectrum_cv(
                        p,
                        lambda,
                        lambda,
                        side,
                        WernerNormalization::Truncated,
                    )?;
                    let value = log_negativity_from_spectrum(&spectrum)?;
                    formula = formula.max((e_ln_qubits(p, lambda, count)? - value).abs());
                }
            }
        }
        checks.push(
            Check::below(
                suite,
                format!("structured vs dense PT spectrum K={count}"),
                spectra,
                1e-10,
            )
            .with_detail("5x5 grid of p and lambda = v"),
        );
        checks.push(
            Check::below(
                suite,
                format!("E_LNCD closed form vs spectrum K={count}"),
                formula,
                1e-9,
            )
            .with_detail("grid points above the converted-state threshold"),
        );
    }

    let mut field = 0.0f64;
    for &p in &grid {
        for &lambda in &grid {
            if p > ln_threshold(lambda) {
                let (value, _) = werner_log_negativity_cv(p, lambda, lambda)?;
                field = field.max((e_ln_cv(p, lambda)? - value).abs());
            }
        }
    }
    checks.push(Check::below(
        suite,
        "E_LN closed form vs untruncated spectrum",
        field,
        1e-9,
    ));

    for &lambda in &[0.2, 0.5, 0.8] {
        let (flip, monotone) = threshold_scan(lambda)?;
        let gap = flip.map_or(f64::INFINITY, |p| (p - ln_threshold(lambda)).abs());
        let mut check = Check::below(
            suite,
            format!("inseparability threshold lambda={lambda}"),
            gap,
            1e-3 + 1e-12,
        )
        .with_detail(format!("first negative p = {flip:?}"));
        check.passed &= monotone;
        checks.push(check);
    }
    Ok(checks)
}

/// First `p` on a 1e-3 grid with a negative partial-transpose eigenvalue, and
/// whether every larger grid point is negative too.
pub fn threshold_scan(lambda: f64) -> CliResult<(Option<f64>, bool)> {
    let mut flip = None;
    let mut monotone = true;
    for j in 0..=1000 {
        let p = j as f64 * 1e-3;
        let spectrum =
            werner_pt_spectrum_cv(p, lambda, lambda, 64, WernerNormalization::Untruncated)?;
        let negative = spectrum.min_eigenvalue() < 0.0;
        match (flip, negative) {
            (None, true) => flip = Some(p),
            (Some(_), false) => monotone = false,
            _ => {}
        }
    }
    Ok((flip, monotone))
}

/// Closed-form identities on their own.
pub fn formulas() -> CliResult<Vec<Check>> {
    let suite = Suite::Formulas;
    let mut lambdas = vec![0.0, 0.01, 0.05];
    lambdas.extend((1..=9).map(|i| i as f64 / 10.0));
    lambdas.extend([0.95, 0.99]);

    let (mut conservation, mut pair_max, mut order) = (0.0f64, 0.0f64, 0usize);
    for &lambda in &lambdas {
        let total = e_tmsv(lambda)?;
        for count in 1..=12u32 {
            let moved = e_transferred(count, lambda)?;
            let left = e_residual(count, lambda)?;
            conservation = conservation.max((moved + left - total).abs());
            pair_max = pair_max.max(e_pair(count, lambda)?);
            if moved < 0.0 || left < 0.0 {
                order += 1;
            }
            if count > 1
                && (moved < e_transferred(count - 1, lambda)?
                    || left > e_residual(count - 1, lambda)?)
            {
                order += 1;
            }
        }
    }
    let mut checks = vec![
        Check::below(suite, "conservation identity", conservation, 1e-12)
            .with_detail("lambda grid to 0.99, K = 1..12"),
        Check::below(
            suite,
            "monotone transferred and residual",
            order as f64,
            0.5,
        ),
        Check {
            suite,
            name: "pair entropy at most one ebit".into(),
            passed: pair_max <= 1.0,
            measured: pair_max,
            tolerance: 1.0,
            detail: None,
        },
    ];

    let mut product = 0.0f64;
    for &lambda in &lambdas[..lambdas.len() - 1] {
        for count in 1..=8 {
            let (lhs, rhs) = product_identity_sides(lambda, count)?;
            product = product.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    checks.push(Check::below(suite, "product identity", product, 1e-12));
    let (lhs, rhs) = product_identity_sides(0.99, 10)?;
    checks.push(Check::below(
        suite,
        "product identity lambda=0.99 K=10",
        (lhs - rhs).abs(),
        1e-10,
    ));

    checks.push(Check::below(
        suite,
        "residual after 12 pairs at lambda=0.9",
        e_residual(12, 0.9)?,
        1e-3,
    ));
    checks.push(Check::below(
        suite,
        "transfer after 12 pairs at lambda=0.9",
        (e_transferred(12, 0.9)? - e_tmsv(0.9)?).abs(),
        1e-3,
    ));

    let (mut limit, mut steps_down) = (0.0f64, 0usize);
    for &lambda in &lambdas {
        let target = e_ln_cv(0.5, lambda)?;
        limit = limit.max((e_ln_qubits(0.5, lambda, 12)? - target).abs());
        for count in 2..=12 {
            if e_ln_qubits(0.5, lambda, count)? < e_ln_qubits(0.5, lambda, count - 1)? {
                steps_down += 1;
            }
        }
    }
    checks.push(
        Check::below(suite, "E_LNCD at K=12 matches E_LN (p=0.5)", limit, 1e-10)
            .with_detail(format!("{steps_down} decreasing steps in K")),
    );
    checks.push(Check::below(
        suite,
        "E_LNCD nondecreasing in K (p=0.5)",
        steps_down as f64,
        0.5,
    ));
    Ok(checks)
}

pub fn report(args: &VerifyArgs) -> CliResult<VerifyReport> {
    let suites = selected(args.suite);
    let mut checks = Vec::new();
    for &suite in &suites {
        checks.extend(match suite {
            Suite::Unitarity => unitarity(args.seed, args.samples)?,
            Suite::Conservation => conservation()?,
            Suite::Roundtrip => roundtrip(args.seed)?,
            Suite::Werner => werner()?,
            Suite::Formulas => formulas()?,
            Suite::All => unreachable!("expanded by selected()"),
        });
    }
    let passed_count = checks.iter().filter(|c| c.passed).count();
    let failed_count = checks.len() - passed_count;
    Ok(VerifyReport {
        command: "verify",
        seed: args.seed,
        samples: args.samples,
        suites,
        passed_count,
        failed_count,
        passed: failed_count == 0,
        checks,
    })
}

pub fn run(args: &VerifyArgs) -> CliResult<Outcome> {
    if args.output.format == Some(Format::Csv) {
        return Err(CliError::Usage("verify writes JSON only".into()));
    }
    let report = report(args)?;
    emit(
        args.output.out.as_deref(),
        Format::Json,
        &report,
        &Table::default(),
    )?;
    for check in report.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "FAIL {}: measured {:e}, tolerance {:e}",
            check.name, check.measured, check.tolerance
        );
    }
    Ok(Outcome {
        passed: report.passed,
    })
}
