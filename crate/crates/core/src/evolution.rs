//! Forward (field to qubit pairs) and reverse (qubit pairs to field) conversion.
//!
//! Step `k` couples each field mode to one qubit of pair `k` through the
//! nonlinear Jaynes-Cummings family. With Ω = ħ = 1 the generator only links
//! `|m, ->` and `|m - 2^(k-1), +>` with strength `m`, so at the stroboscopic
//! time `t_k = π / 2^k` the evolution is a set of independent 2×2 rotations
//! ([`CouplingBlock`]) by the angle `m π / 2^k`. Operators are never
//! materialized except in [`DenseStepOracle`], which exponentiates the
//! generator directly and serves as an independent check.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::states::{
    pair_index, DiagonalCVMixture, FockCutoff, PureCVState, QubitPairState, TailWeight,
    WernerCVState, C64, DENSE_LIMIT,
};

/// Default bound on the second singular value at each forward step.
pub const DEFAULT_DEFECT_THRESHOLD: f64 = 1e-8;

/// Allowed population left outside `|-->` after a reverse step.
pub const LEFTOVER_THRESHOLD: f64 = 1e-12;

/// Input amplitudes off the expected support that still count as zero.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

/// Largest pair count for which the mixed reverse path builds dense matrices.
pub const MIXED_REVERSE_MAX_PAIRS: usize = 3;

const MAX_STEP: u32 = 60;

/// Interaction time of step `k` in units of 1/Ω.
pub fn step_time(k: u32) -> f64 {
    PI / 2f64.powi(k as i32)
}

/// Fock offset `2^(k-1)` swapped into qubit pair `k`.
fn stride(k: u32) -> usize {
    1usize << (k - 1)
}

fn check_step(k: u32) -> Result<()> {
    if (1..=MAX_STEP).contains(&k) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "step",
            value: k as f64,
            expected: "1 <= k <= 60",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Mode A with qubit C.
    AC,
    /// Mode B with qubit D.
    BD,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `exp(-i H_k t_k)`.
    Forward,
    /// `exp(+i H_k t_k)`.
    Reverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Reverse => 1.0,
        }
    }
}

/// Invariant subspace `{|m_high, ->, |m_high - 2^(k-1), +>}` of step `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CouplingBlock {
    pub step: u32,
    pub m_high: usize,
}

impl CouplingBlock {
    pub fn new(step: u32, m_high: usize) -> Result<Self> {
        check_step(step)?;
        if m_high < stride(step) {
            return Err(Error::Parameter {
                name: "m_high",
                value: m_high as f64,
                expected: "m_high >= 2^(k-1)",
            });
        }
        Ok(Self { step, m_high })
    }

    pub fn m_low(&self) -> usize {
        self.m_high - stride(self.step)
    }

    pub fn angle(&self) -> f64 {
        self.m_high as f64 * step_time(self.step)
    }

    /// `(cos θ, sin θ)`, exact at multiples of π/2.
    pub fn rotation(&self) -> (f64, f64) {
        rabi_cos_sin(self.m_high, self.step)
    }

    /// Action on `(|m_high, ->, |m_low, +>)`, columns are images of the basis vectors.
    pub fn matrix(&self, direction: Direction) -> [[C64; 2]; 2] {
        let (c, s) = self.rotation();
        let off = C64::new(0.0, direction.sign() * s);
        let diag = C64::new(c, 0.0);
        [[diag, off], [off, diag]]
    }

    /// Every block of step `k` that fits below the cutoff.
    pub fn enumerate(step: u32, cutoff: FockCutoff) -> impl Iterator<Item = CouplingBlock> {
        (stride(step)..cutoff.levels()).map(move |m_high| CouplingBlock { step, m_high })
    }
}

/// Angle `m π / 2^k` reduced modulo 2π on the integers, so that quarter turns
/// give exact zeros.
fn rabi_cos_sin(m: usize, k: u32) -> (f64, f64) {
    let period = 1u128 << (k + 1);
    let r = (m as u128) % period;
    let quarter = 1u128 << (k - 1);
    if r.is_multiple_of(quarter) {
        match r / quarter {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let (s, c) = (r as f64 * step_time(k)).sin_cos();
        (c, s)
    }
}

/// Images of one `(Fock, qubit)` basis state under one side of step `k`.
fn block_image(
    x: usize,
    q: usize,
    k: u32,
    levels: usize,
    direction: Direction,
) -> [Option<(usize, usize, C64)>; 2] {
    let s = stride(k);
    let one = C64::new(1.0, 0.0);
    let nonzero = |t: (usize, usize, C64)| (t.2 != C64::new(0.0, 0.0)).then_some(t);
    if q == 0 {
        if x < s {
            return [Some((x, 0, one)), None];
        }
        let m = CouplingBlock { step: k, m_high: x }.matrix(direction);
        [nonzero((x, 0, m[0][0])), nonzero((x - s, 1, m[1][0]))]
    } else {
        if x + s >= levels {
            return [Some((x, 1, one)), None];
        }
        let m = CouplingBlock {
            step: k,
            m_high: x + s,
        }
        .matrix(direction);
        [nonzero((x + s, 0, m[0][1])), nonzero((x, 1, m[1][1]))]
    }
}

/// Key `(m, n, q_C, q_D)` of a joint amplitude.
pub type JointKey = (usize, usize, usize, usize);

/// Dense index of a joint basis state: `((m * N + n) * 2 + q_C) * 2 + q_D`.
pub fn joint_index(cutoff: FockCutoff, m: usize, n: usize, qc: usize, qd: usize) -> usize {
    ((m * cutoff.levels() + n) * 2 + qc) * 2 + qd
}

/// Field state tensored with one qubit pair, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    cutoff: FockCutoff,
    amps: BTreeMap<JointKey, C64>,
}

impl JointState {
    pub fn product(cv: &PureCVState, pair: &[C64; 4]) -> Self {
        let mut amps = BTreeMap::new();
        for ((m, n), a) in cv.iter() {
            for qc in 0..2 {
                for qd in 0..2 {
                    let b = pair[pair_index(qc, qd)];
                    if b != C64::new(0.0, 0.0) {
                        amps.insert((m, n, qc, qd), a * b);
                    }
                }
            }
        }
        Self {
            cutoff: cv.cutoff(),
            amps,
        }
    }

    pub fn from_dense(cutoff: FockCutoff, vector: &DVector<C64>) -> Result<Self> {
        let n = cutoff.levels();
        if vector.len() != 4 * n * n {
            return Err(Error::Parameter {
                name: "joint vector length",
                value: vector.len() as f64,
                expected: "4 * levels^2",
            });
        }
        let mut amps = BTreeMap::new();
        for (idx, &a) in vector.iter().enumerate() {
            if a != C64::new(0.0, 0.0) {
                let (qd, rest) = (idx % 2, idx / 2);
                let (qc, rest) = (rest % 2, rest / 2);
                amps.insert((rest / n, rest % n, qc, qd), a);
            }
        }
        Ok(Self { cutoff, amps })
    }

    pub fn to_dense(&self) -> DVector<C64> {
        let n = self.cutoff.levels();
        let mut out = DVector::zeros(4 * n * n);
        for (&(m, k, qc, qd), &a) in &self.amps {
            out[joint_index(self.cutoff, m, k, qc, qd)] = a;
        }
        out
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn amp(&self, m: usize, n: usize, qc: usize, qd: usize) -> C64 {
        self.amps.get(&(m, n, qc, qd)).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (JointKey, C64)> + '_ {
        self.amps.iter().map(|(&k, &a)| (k, a))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Population with the pair outside `|-->`.
    pub fn excited_weight(&self) -> f64 {
        self.amps
            .iter()
            .filter(|(&(_, _, qc, qd), _)| qc != 0 || qd != 0)
            .map(|(_, a)| a.norm_sqr())
            .fold(0.0, |acc, w| acc + w)
    }

    /// The field amplitudes paired with `|-->`.
    fn blank_component(&self) -> BTreeMap<(usize, usize), C64> {
        self.amps
            .iter()
            .filter(|(&(_, _, qc, qd), _)| qc == 0 && qd == 0)
            .map(|(&(m, n, _, _), &a)| ((m, n), a))
            .collect()
    }

    /// Applies both half steps of step `k`.
    pub fn apply_step(&self, k: u32, direction: Direction) -> Result<Self> {
        let half = apply_half_step(self, Side::AC, k, direction)?;
        apply_half_step(&half, Side::BD, k, direction)
    }
}

/// Applies every coupling block of step `k` to one side of the joint state.
pub fn apply_half_step(
    joint: &JointState,
    side: Side,
    k: u32,
    direction: Direction,
) -> Result<JointState> {
    check_step(k)?;
    joint.cutoff.check_pairs(k)?;
    let levels = joint.cutoff.levels();
    let mut out: BTreeMap<JointKey, C64> = BTreeMap::new();
    for (&(m, n, qc, qd), &a) in &joint.amps {
        let (x, q) = match side {
            Side::AC => (m, qc),
            Side::BD => (n, qd),
        };
        for (x2, q2, coeff) in block_image(x, q, k, levels, direction)
            .into_iter()
            .flatten()
        {
            let key = match side {
                Side::AC => (x2, n, q2, qd),
                Side::BD => (m, x2, qc, q2),
            };
            *out.entry(key).or_default() += coeff * a;
        }
    }
    out.retain(|_, a| *a != C64::new(0.0, 0.0));
    Ok(JointState {
        cutoff: joint.cutoff,
        amps: out,
    })
}

/// Product factors of a joint state and how far it is from a product.
#[derive(Clone, Debug)]
pub struct ForwardStep {
    pub residual: PureCVState,
    pub pair: QubitPairState,
    /// Second singular value across the field | pair split.
    pub defect: f64,
    /// Dominant singular value before the residual was renormalized.
    pub residual_norm: f64,
}

/// Splits a joint state into field ⊗ pair by SVD of its `(m,n) × pair` matrix.
///
/// The pair factor's largest amplitude is made real positive and the phase is
/// carried by the field factor.
pub fn factorize(joint: &JointState) -> Result<ForwardStep> {
    let rows: Vec<(usize, usize)> = {
        let mut keys: Vec<_> = joint.amps.keys().map(|&(m, n, _, _)| (m, n)).collect();
        keys.dedup();
        keys
    };
    if rows.is_empty() {
        return Err(Error::Normalization(0.0));
    }
    let row_of: BTreeMap<(usize, usize), usize> =
        rows.iter().enumerate().map(|(i, &key)| (key, i)).collect();
    let mut matrix = DMatrix::<C64>::zeros(rows.len(), 4);
    for (&(m, n, qc, qd), &a) in &joint.amps {
        matrix[(row_of[&(m, n)], pair_index(qc, qd))] = a;
    }

    let svd = SVD::new(matrix.clone(), false, true);
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let lead = order[0];
    let defect = order.get(1).map_or(0.0, |&i| sigma[i]);
    if sigma[lead] == 0.0 {
        return Err(Error::Normalization(0.0));
    }

    let v_t = svd.v_t.as_ref().expect("requested V^H");
    let mut pair = [C64::new(0.0, 0.0); 4];
    for (q, slot) in pair.iter_mut().enumerate() {
        *slot = v_t[(lead, q)];
    }
    let largest = pair.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let anchor = pair
        .iter()
        .position(|a| a.norm() >= largest * (1.0 - 1e-9))
        .expect("nonzero pair factor");
    let phase = pair[anchor] / pair[anchor].norm();
    let pair = pair.map(|a| a * phase.conj());

    // field factor by projection onto the pair factor
    let projector = DVector::from_iterator(4, pair.iter().map(|a| a.conj()));
    let field = &matrix * projector;
    let norm = field.norm();
    if norm == 0.0 {
        return Err(Error::Normalization(0.0));
    }
    let amps = rows
        .iter()
        .zip(field.iter())
        .map(|(&key, &a)| (key, a / norm))
        .filter(|(_, a)| *a != C64::new(0.0, 0.0))
        .collect();
    Ok(ForwardStep {
        residual: PureCVState::from_map_unchecked(joint.cutoff, amps, 0.0),
        pair: QubitPairState::pure_normalized(pair)?,
        defect,
        residual_norm: norm,
    })
}

/// One forward step: attach a blank pair, evolve under `U_k`, split off the pair.
pub fn forward_step(cv: &PureCVState, k: u32, threshold: f64) -> Result<ForwardStep> {
    check_step(k)?;
    cv.cutoff().check_pairs(k)?;
    let stride = stride(k);
    if let Some(((m, n), amplitude)) = cv.max_off_support(stride) {
        if amplitude > SUPPORT_TOLERANCE {
            return Err(Error::Support {
                step: k,
                stride,
                m,
                n,
                amplitude,
            });
        }
    }
    let blank = QubitPairState::blank();
    let joint = JointState::product(cv, blank.amplitudes().expect("pure"));
    let evolved = joint.apply_step(k, Direction::Forward)?;
    let mut step = factorize(&evolved)?;
    if step.defect > threshold {
        return Err(Error::Factorization {
            step: k,
            defect: step.defect,
            threshold,
        });
    }
    step.residual = step.residual.with_tail(cv.tail_weight());
    Ok(step)
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u32,
    pub defect: f64,
    pub pair: QubitPairState,
    pub residual_norm: f64,
    pub tail_weight: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConversionReport {
    pub steps: Vec<StepRecord>,
    pub input_tail: f64,
}

impl ConversionReport {
    pub fn max_defect(&self) -> f64 {
        self.steps.iter().map(|s| s.defect).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct ForwardConversion {
    pub residual: PureCVState,
    pub pairs: Vec<QubitPairState>,
    pub report: ConversionReport,
}

/// Runs forward steps `1..=pairs`, extracting one qubit pair per step.
pub fn forward_convert(cv: &PureCVState, pairs: u32, threshold: f64) -> Result<ForwardConversion> {
    if pairs == 0 {
        return Err(Error::NoPairs);
    }
    check_step(pairs)?;
    cv.cutoff().check_pairs(pairs)?;
    let mut report = ConversionReport {
        steps: Vec::with_capacity(pairs as usize),
        input_tail: cv.tail_weight(),
    };
    let mut extracted = Vec::with_capacity(pairs as usize);
    let mut current = cv.clone();
    for k in 1..=pairs {
        let step = forward_step(&current, k, threshold)?;
        report.steps.push(StepRecord {
            step: k,
            defect: step.defect,
            pair: step.pair.clone(),
            residual_norm: step.residual_norm,
            tail_weight: step.residual.tail_weight(),
        });
        extracted.push(step.pair);
        current = step.residual;
    }
    Ok(ForwardConversion {
        residual: current,
        pairs: extracted,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct DiagonalConversion {
    pub residual: DiagonalCVMixture,
    /// Diagonal pair densities, pair `k` at index `k - 1`.
    pub pairs: Vec<QubitPairState>,
    /// Largest deviation of the converted weights from `residual ⊗ pairs`.
    pub defect: f64,
}

/// Forward conversion of a diagonal mixture.
///
/// Every basis state `|m n>` is mapped to a single basis state (up to a phase
/// that cancels in a diagonal density): pair `k` receives binary digit `k` of
/// `m` and of `n`, and the field keeps the digits above `K`.
pub fn forward_convert_diagonal(
    diag: &DiagonalCVMixture,
    pairs: u32,
) -> Result<DiagonalConversion> {
    if pairs == 0 {
        return Err(Error::NoPairs);
    }
    check_step(pairs)?;
    let cutoff = diag.cutoff();
    cutoff.check_pairs(pairs)?;
    let levels = cutoff.levels();
    let mask = (1usize << pairs) - 1;
    let digit = |x: usize, k: u32| (x >> (k - 1)) & 1;

    let mut residual = vec![0.0; levels * levels];
    let mut marginals = vec![[0.0f64; 4]; pairs as usize];
    for m in 0..levels {
        for n in 0..levels {
            let w = diag.weight(m, n);
            residual[(m & !mask) * levels + (n & !mask)] += w;
            for k in 1..=pairs {
                marginals[(k - 1) as usize][pair_index(digit(m, k), digit(n, k))] += w;
            }
        }
    }

    let mut defect = 0.0f64;
    for m in 0..levels {
        for n in 0..levels {
            let product: f64 = residual[(m & !mask) * levels + (n & !mask)]
                * (1..=pairs)
                    .map(|k| marginals[(k - 1) as usize][pair_index(digit(m, k), digit(n, k))])
                    .product::<f64>();
            defect = defect.max((diag.weight(m, n) - product).abs());
        }
    }

    let pair_states = marginals
        .iter()
        .map(|probs| {
            let mut rho = nalgebra::Matrix4::zeros();
            for (i, &p) in probs.iter().enumerate() {
                rho[(i, i)] = C64::new(p, 0.0);
            }
            QubitPairState::mixed(rho)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalConversion {
        residual: DiagonalCVMixture::from_weights(cutoff, residual)?.with_tail(diag.tail_weight()),
        pairs: pair_states,
        defect,
    })
}

/// Converted Werner state: both branches with their weights.
#[derive(Clone, Debug)]
pub struct WernerConversion {
    pub p: f64,
    pub pure: ForwardConversion,
    pub thermal: DiagonalConversion,
}

pub fn forward_convert_werner(
    werner: &WernerCVState,
    pairs: u32,
    threshold: f64,
) -> Result<WernerConversion> {
    Ok(WernerConversion {
        p: werner.p(),
        pure: forward_convert(werner.pure_branch(), pairs, threshold)?,
        thermal: forward_convert_diagonal(werner.thermal_branch(), pairs)?,
    })
}

impl WernerConversion {
    pub fn pair_count(&self) -> usize {
        self.pure.pairs.len()
    }

    /// Qubit marginal `p ⊗|Φ_k><Φ_k| + (1-p) ⊗ϱ_k` in C-register ⊗ D-register order.
    pub fn qubit_density(&self) -> Result<DMatrix<C64>> {
        let pure = crate::states::qubit_register_density(&self.pure.pairs)?;
        let thermal = crate::states::qubit_register_density(&self.thermal.pairs)?;
        Ok(pure.scale(self.p) + thermal.scale(1.0 - self.p))
    }
}

/// Field density over `|m n>` with row index `m * N + n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CvDensity {
    pub cutoff: FockCutoff,
    pub matrix: DMatrix<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CvOutput {
    Pure(PureCVState),
    Mixed(CvDensity),
}

#[derive(Clone, Debug)]
pub struct ReverseConversion {
    pub state: CvOutput,
    /// Excitation left on each pair after it was consumed, pair `k` at index `k - 1`.
    pub leftover: Vec<f64>,
}

/// Transfers qubit pairs into an initially empty field, highest pair first.
pub fn reverse_convert(pairs: &[QubitPairState], cutoff: FockCutoff) -> Result<ReverseConversion> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let count = pairs.len() as u32;
    check_step(count)?;
    cutoff.check_pairs(count)?;
    if pairs.iter().all(QubitPairState::is_pure) {
        reverse_pure(pairs, cutoff)
    } else {
        reverse_mixed(pairs, cutoff)
    }
}

fn reverse_pure(pairs: &[QubitPairState], cutoff: FockCutoff) -> Result<ReverseConversion> {
    let mut cv = PureCVState::vacuum(cutoff);
    let mut leftover = vec![0.0; pairs.len()];
    for (idx, pair) in pairs.iter().enumerate().rev() {
        let k = idx as u32 + 1;
        let joint = JointState::product(&cv, pair.amplitudes().expect("pure pair"));
        let evolved = joint.apply_step(k, Direction::Reverse)?;
        let weight = evolved.excited_weight();
        if weight > LEFTOVER_THRESHOLD {
            return Err(Error::LeftoverExcitation { step: k, weight });
        }
        leftover[idx] = weight;
        cv = PureCVState::from_map_unchecked(cutoff, evolved.blank_component(), 0.0);
    }
    Ok(ReverseConversion {
        state: CvOutput::Pure(cv),
        leftover,
    })
}

/// `U ρ U†` for a Hermitian joint density, one column at a time through the block path.
fn conjugate_density(
    rho: &DMatrix<C64>,
    cutoff: FockCutoff,
    k: u32,
    direction: Direction,
) -> Result<DMatrix<C64>> {
    let apply_columns = |m: &DMatrix<C64>| -> Result<DMatrix<C64>> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            let col = DVector::from_iterator(m.nrows(), m.column(j).iter().copied());
            let evolved = JointState::from_dense(cutoff, &col)?.apply_step(k, direction)?;
            out.set_column(j, &evolved.to_dense());
        }
        Ok(out)
    };
    let half = apply_columns(rho)?;
    apply_columns(&half.adjoint())
}

fn reverse_mixed(pairs: &[QubitPairState], cutoff: FockCutoff) -> Result<ReverseConversion> {
    if pairs.len() > MIXED_REVERSE_MAX_PAIRS {
        return Err(Error::SizeGuard {
            dim: 1 << (4 * pairs.len()),
            limit: 1 << (4 * MIXED_REVERSE_MAX_PAIRS),
        });
    }
    let levels = cutoff.levels();
    let cv_dim = levels * levels;
    if 4 * cv_dim > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            dim: 4 * cv_dim,
            limit: DENSE_LIMIT,
        });
    }
    let mut cv = DMatrix::<C64>::zeros(cv_dim, cv_dim);
    cv[(0, 0)] = C64::new(1.0, 0.0);
    let mut leftover = vec![0.0; pairs.len()];
    for (idx, pair) in pairs.iter().enumerate().rev() {
        let k = idx as u32 + 1;
        let joint = cv.kronecker(&pair.density());
        let evolved = conjugate_density(&joint, cutoff, k, Direction::Reverse)?;
        let weight = (0..evolved.nrows())
            .filter(|i| i % 4 != 0)
            .map(|i| evolved[(i, i)].re)
            .fold(0.0, |acc, w| acc + w);
        if weight > LEFTOVER_THRESHOLD {
            return Err(Error::LeftoverExcitation { step: k, weight });
        }
        leftover[idx] = weight;
        cv = DMatrix::from_fn(cv_dim, cv_dim, |i, j| evolved[(4 * i, 4 * j)]);
    }
    Ok(ReverseConversion {
        state: CvOutput::Mixed(CvDensity { cutoff, matrix: cv }),
        leftover,
    })
}

/// Closed-form reverse output for pure pairs.
///
/// Amplitude of `|n, m>` with `n = sum_j n_j 2^(j-1)` (mode A) and
/// `m = sum_j m_j 2^(j-1)` (mode B) is
/// `prod_j (-1)^(m_{j+1} + n_{j+1}) i^(m_j + n_j) a^j_{n_j m_j}` with
/// `n_{K+1} = m_{K+1} = 0`.
pub fn reverse_closed_form(pairs: &[QubitPairState]) -> Result<PureCVState> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let amps: Vec<&[C64; 4]> = pairs
        .iter()
        .map(|p| {
            p.amplitudes()
                .ok_or_else(|| Error::InvalidPair("closed form needs pure pairs".into()))
        })
        .collect::<Result<_>>()?;
    let count = amps.len();
    check_step(count as u32)?;
    let side = 1usize << count;
    let cutoff = FockCutoff::new(side)?;
    let mut out = BTreeMap::new();
    for n in 0..side {
        for m in 0..side {
            let a = closed_form_amplitude(&amps, n, m);
            if a != C64::new(0.0, 0.0) {
                out.insert((n, m), a);
            }
        }
    }
    let state = PureCVState::from_map_unchecked(cutoff, out, 0.0);
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Normalization(norm));
    }
    Ok(state)
}

fn closed_form_amplitude(amps: &[&[C64; 4]], n: usize, m: usize) -> C64 {
    let bit = |x: usize, j: usize| (x >> j) & 1;
    amps.iter()
        .enumerate()
        .map(|(j, a)| {
            phase_factor(bit(n, j + 1) + bit(m, j + 1), bit(n, j) + bit(m, j))
                * a[pair_index(bit(n, j), bit(m, j))]
        })
        .product()
}

/// `(-1)^higher * i^current`.
fn phase_factor(higher: usize, current: usize) -> C64 {
    let sign = if higher.is_multiple_of(2) { 1.0 } else { -1.0 };
    let i_pow = match current % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    };
    i_pow * sign
}

/// A basis state where the closed form and the stepwise reverse disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMismatch {
    pub n: usize,
    pub m: usize,
    /// `stepwise / (closed * global_phase)`.
    pub ratio: C64,
    /// Binary digits `(n_j, m_j)` of the basis state, pair 1 first.
    pub digits: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct PhaseAudit {
    pub fidelity: f64,
    pub global_phase: C64,
    pub mismatches: Vec<PhaseMismatch>,
}

/// Compares [`reverse_closed_form`] against [`reverse_convert`] basis state by basis state.
pub fn reverse_phase_audit(pairs: &[QubitPairState], tolerance: f64) -> Result<PhaseAudit> {
    let closed = reverse_closed_form(pairs)?;
    let stepwise = match reverse_convert(pairs, closed.cutoff())?.state {
        CvOutput::Pure(s) => s,
        CvOutput::Mixed(_) => unreachable!("pure pairs take the pure path"),
    };
    let overlap = closed.inner(&stepwise);
    let global_phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let side = closed.cutoff().levels();
    let count = pairs.len();
    let mut mismatches = Vec::new();
    for n in 0..side {
        for m in 0..side {
            let expected = closed.coeff(n, m) * global_phase;
            let actual = stepwise.coeff(n, m);
            if (expected - actual).norm() > tolerance {
                let ratio = if expected.norm() > 0.0 {
                    actual / expected
                } else {
                    C64::new(f64::NAN, f64::NAN)
                };
                mismatches.push(PhaseMismatch {
                    n,
                    m,
                    ratio,
                    digits: (0..count).map(|j| ((n >> j) & 1, (m >> j) & 1)).collect(),
                });
            }
        }
    }
    Ok(PhaseAudit {
        fidelity: overlap.norm_sqr(),
        global_phase,
        mismatches,
    })
}

/// Largest field cutoff the dense oracle accepts for state vectors.
pub const ORACLE_VECTOR_LIMIT: usize = 64;
/// Largest field cutoff the dense oracle accepts for densities and full matrices.
pub const ORACLE_DENSITY_LIMIT: usize = 16;

/// Which sides a dense oracle application acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sides {
    Both,
    Only(Side),
}

/// Step unitary built by exponentiating the single-side generator densely.
///
/// Single-side basis index is `x * 2 + q` (Fock `x`, qubit `q`).
#[derive(Clone, Debug)]
pub struct DenseStepOracle {
    cutoff: FockCutoff,
    side_unitary: DMatrix<C64>,
}

impl DenseStepOracle {
    pub fn new(cutoff: FockCutoff, k: u32, direction: Direction) -> Result<Self> {
        check_step(k)?;
        cutoff.check_pairs(k)?;
        if cutoff.levels() > ORACLE_VECTOR_LIMIT {
            return Err(Error::SizeGuard {
                dim: cutoff.levels(),
                limit: ORACLE_VECTOR_LIMIT,
            });
        }
        let generator = Self::generator(cutoff, k);
        let eigen = SymmetricEigen::new(generator);
        let t = step_time(k) * direction.sign();
        let vectors = eigen.eigenvectors.map(|x| C64::new(x, 0.0));
        let phases = DMatrix::from_diagonal(&eigen.eigenvalues.map(|e| C64::new(0.0, e * t).exp()));
        let side_unitary = &vectors * phases * vectors.transpose();
        Ok(Self {
            cutoff,
            side_unitary,
        })
    }

    /// Single-side `H_k` with Ω = 1: couples `|x, ->` to `|x - 2^(k-1), +>` with strength `x`.
    pub fn generator(cutoff: FockCutoff, k: u32) -> DMatrix<f64> {
        let levels = cutoff.levels();
        let s = stride(k);
        let mut h = DMatrix::zeros(2 * levels, 2 * levels);
        for x in s..levels {
            let (minus, plus) = (2 * x, 2 * (x - s) + 1);
            h[(minus, plus)] = x as f64;
            h[(plus, minus)] = x as f64;
        }
        h
    }

    pub fn side_unitary(&self) -> &DMatrix<C64> {
        &self.side_unitary
    }

    /// `U_AC ⊗ U_BD` in joint index order.
    pub fn full_matrix(&self) -> Result<DMatrix<C64>> {
        let levels = self.cutoff.levels();
        if levels > ORACLE_DENSITY_LIMIT {
            return Err(Error::SizeGuard {
                dim: levels,
                limit: ORACLE_DENSITY_LIMIT,
            });
        }
        let dim = 4 * levels * levels;
        let u = &self.side_unitary;
        Ok(DMatrix::from_fn(dim, dim, |row, col| {
            let (a, b) = self.split(row);
            let (a2, b2) = self.split(col);
            u[(a, a2)] * u[(b, b2)]
        }))
    }

    /// Joint index to (A-side index, B-side index).
    fn split(&self, idx: usize) -> (usize, usize) {
        let levels = self.cutoff.levels();
        let (qd, rest) = (idx % 2, idx / 2);
        let (qc, rest) = (rest % 2, rest / 2);
        let (m, n) = (rest / levels, rest % levels);
        (2 * m + qc, 2 * n + qd)
    }

    pub fn apply_vector(&self, vector: &DVector<C64>, sides: Sides) -> Result<DVector<C64>> {
        let levels = self.cutoff.levels();
        let dim = 4 * levels * levels;
        if vector.len() != dim {
            return Err(Error::Parameter {
                name: "joint vector length",
                value: vector.len() as f64,
                expected: "4 * levels^2",
            });
        }
        let w = 2 * levels;
        let mut x = DMatrix::<C64>::zeros(w, w);
        for (idx, &a) in vector.iter().enumerate() {
            let (ra, rb) = self.split(idx);
            x[(ra, rb)] = a;
        }
        let u = &self.side_unitary;
        let y = match sides {
            Sides::Both => u * x * u.transpose(),
            Sides::Only(Side::AC) => u * x,
            Sides::Only(Side::BD) => x * u.transpose(),
        };
        Ok(DVector::from_fn(dim, |idx, _| {
            let (ra, rb) = self.split(idx);
            y[(ra, rb)]
        }))
    }

    pub fn apply_density(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let full = self.full_matrix()?;
        if rho.nrows() != full.nrows() || rho.ncols() != full.ncols() {
            return Err(Error::Parameter {
                name: "joint density size",
                value: rho.nrows() as f64,
                expected: "4 * levels^2 square",
            });
        }
        Ok(&full * rho * full.adjoint())
    }
}

/// Both half steps of step `k` through the dense oracle.
pub fn dense_oracle_step(
    joint: &DVector<C64>,
    cutoff: FockCutoff,
    k: u32,
    direction: Direction,
) -> Result<DVector<C64>> {
    DenseStepOracle::new(cutoff, k, direction)?.apply_vector(joint, Sides::Both)
}

/// `U ρ U†` for a joint density through the dense oracle.
pub fn dense_oracle_step_density(
    rho: &DMatrix<C64>,
    cutoff: FockCutoff,
    k: u32,
    direction: Direction,
) -> Result<DMatrix<C64>> {
    DenseStepOracle::new(cutoff, k, direction)?.apply_density(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::states::{make_tmsv, TmsvParams, Truncation};

    fn cutoff(n: usize) -> FockCutoff {
        FockCutoff::new(n).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn basis(n: usize, key: JointKey) -> JointState {
        let mut amps = BTreeMap::new();
        amps.insert(key, c(1.0, 0.0));
        JointState {
            cutoff: cutoff(n),
            amps,
        }
    }

    fn tmsv(lambda: f64, n: usize) -> PureCVState {
        make_tmsv(
            TmsvParams::from_lambda(lambda).unwrap(),
            cutoff(n),
            Truncation::permissive(),
        )
        .unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn step_times() {
        assert_eq!(step_time(1), PI / 2.0);
        assert_eq!(step_time(2), PI / 4.0);
        assert_eq!(step_time(5), PI / 32.0);
    }

    #[test]
    fn exact_quarter_turns() {
        assert_eq!(rabi_cos_sin(1, 1), (0.0, 1.0));
        assert_eq!(rabi_cos_sin(2, 1), (-1.0, 0.0));
        assert_eq!(rabi_cos_sin(3, 1), (0.0, -1.0));
        assert_eq!(rabi_cos_sin(4, 3), (0.0, 1.0));
        let (cos, sin) = rabi_cos_sin(3, 3);
        assert!((cos - (3.0 * PI / 8.0).cos()).abs() < 1e-15);
        assert!((sin - (3.0 * PI / 8.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn first_step_basis_action() {
        // |1,-> -> -i|0,+>
        let out =
            apply_half_step(&basis(4, (1, 0, 0, 0)), Side::AC, 1, Direction::Forward).unwrap();
        assert_eq!(out.iter().count(), 1);
        assert_eq!(out.amp(0, 0, 1, 0), c(0.0, -1.0));

        // |2,-> -> -|2,->
        let out =
            apply_half_step(&basis(4, (2, 0, 0, 0)), Side::AC, 1, Direction::Forward).unwrap();
        assert_eq!(out.iter().count(), 1);
        assert_eq!(out.amp(2, 0, 0, 0), c(-1.0, 0.0));

        // |5,-> -> -i|4,+> on the B side
        let out =
            apply_half_step(&basis(8, (0, 5, 0, 0)), Side::BD, 1, Direction::Forward).unwrap();
        assert_eq!(out.amp(0, 4, 0, 1), c(0.0, -1.0));

        for dir in [Direction::Forward, Direction::Reverse] {
            let out = apply_half_step(&basis(4, (0, 0, 0, 0)), Side::AC, 1, dir).unwrap();
            assert_eq!(out, basis(4, (0, 0, 0, 0)));
        }
    }

    #[test]
    fn reverse_last_step_on_excited_qubit() {
        let big_k = 3;
        let n = 1 << big_k;
        let out =
            apply_half_step(&basis(n, (0, 0, 1, 0)), Side::AC, big_k, Direction::Reverse).unwrap();
        assert_eq!(out.iter().count(), 1);
        assert_eq!(out.amp(1 << (big_k - 1), 0, 0, 0), c(0.0, 1.0));
    }

    #[test]
    fn half_step_rejects_misaligned_cutoff() {
        let err =
            apply_half_step(&basis(6, (0, 0, 0, 0)), Side::AC, 3, Direction::Forward).unwrap_err();
        assert_eq!(
            err,
            Error::CutoffAlignment {
                cutoff: 6,
                required: 8
            }
        );
    }

    #[test]
    fn half_steps_preserve_norm() {
        let mut rng = random::rng(11);
        let n = cutoff(16);
        for k in 1..=4 {
            for dir in [Direction::Forward, Direction::Reverse] {
                let v = random::random_joint_vector(&mut rng, n);
                let joint = JointState::from_dense(n, &v).unwrap();
                for side in [Side::AC, Side::BD] {
                    let out = apply_half_step(&joint, side, k, dir).unwrap();
                    assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_and_reverse_are_inverse() {
        let mut rng = random::rng(5);
        let n = cutoff(16);
        let v = random::random_joint_vector(&mut rng, n);
        let joint = JointState::from_dense(n, &v).unwrap();
        for k in 1..=4 {
            let back = joint
                .apply_step(k, Direction::Forward)
                .unwrap()
                .apply_step(k, Direction::Reverse)
                .unwrap();
            let diff = (back.to_dense() - &v).norm();
            assert!(diff < 1e-13, "k={k}: {diff}");
        }
    }

    #[test]
    fn block_enumeration() {
        let blocks: Vec<_> = CouplingBlock::enumerate(2, cutoff(8)).collect();
        assert_eq!(blocks.len(), 6);
        assert_eq!(blocks[0].m_high, 2);
        assert_eq!(blocks[0].m_low(), 0);
        assert!((blocks[0].angle() - PI / 2.0).abs() < 1e-15);
        assert!(CouplingBlock::new(3, 3).is_err());
        let m = CouplingBlock::new(1, 1).unwrap().matrix(Direction::Reverse);
        assert_eq!(m[1][0], c(0.0, 1.0));
    }

    #[test]
    fn first_forward_step_on_tmsv() {
        let step = forward_step(&tmsv(0.5, 64), 1, DEFAULT_DEFECT_THRESHOLD).unwrap();
        let a = step.pair.amplitudes().unwrap();
        let norm = 1.25f64.sqrt();
        assert!(close(a[0], c(1.0 / norm, 0.0), 1e-12));
        assert!(close(a[3], c(-0.5 / norm, 0.0), 1e-12));
        assert!(a[1].norm() < 1e-14 && a[2].norm() < 1e-14);
        assert!((a[0].re - 0.894427).abs() < 1e-6 && (a[3].re + 0.447214).abs() < 1e-6);
        assert!(step.defect < 1e-12);

        // residual lives on even photon numbers with ratio λ² between neighbours
        assert!(step.residual.max_off_support(2).map_or(0.0, |x| x.1) < 1e-12);
        let r0 = step.residual.coeff(0, 0);
        for m in 1..20 {
            let ratio =
                step.residual.coeff(2 * m, 2 * m) / step.residual.coeff(2 * m - 2, 2 * m - 2);
            assert!(close(ratio, c(0.25, 0.0), 1e-12), "m={m}: {ratio}");
        }
        assert!(r0.norm() > 0.0);
    }

    #[test]
    fn strongly_squeezed_residual_stays_geometric() {
        let lambda = 0.99;
        let step = forward_step(&tmsv(lambda, 3584), 1, DEFAULT_DEFECT_THRESHOLD).unwrap();
        for m in 1..1792 {
            let ratio =
                step.residual.coeff(2 * m, 2 * m) / step.residual.coeff(2 * m - 2, 2 * m - 2);
            assert!(
                close(ratio, c(lambda * lambda, 0.0), 1e-10),
                "m={m}: {ratio}"
            );
        }
    }

    #[test]
    fn vacuum_converts_to_blank_pairs() {
        let vacuum = tmsv(0.0, 8);
        let out = forward_convert(&vacuum, 2, DEFAULT_DEFECT_THRESHOLD).unwrap();
        for pair in &out.pairs {
            assert_eq!(pair, &QubitPairState::blank());
        }
        assert_eq!(out.residual.coeff(0, 0), c(1.0, 0.0));
        assert_eq!(out.residual.nnz(), 1);
    }

    #[test]
    fn forward_step_checks_support() {
        let err = forward_step(&tmsv(0.5, 64), 2, DEFAULT_DEFECT_THRESHOLD).unwrap_err();
        assert!(matches!(
            err,
            Error::Support {
                step: 2,
                stride: 2,
                m: 1,
                n: 1,
                ..
            }
        ));
        let err = forward_convert(&tmsv(0.5, 12), 3, DEFAULT_DEFECT_THRESHOLD).unwrap_err();
        assert!(matches!(err, Error::CutoffAlignment { .. }));
    }

    #[test]
    fn third_pair_ratio() {
        let out = forward_convert(&tmsv(0.8, 256), 3, DEFAULT_DEFECT_THRESHOLD).unwrap();
        let a = out.pairs[2].amplitudes().unwrap();
        let ratio = a[3] / a[0];
        assert!(close(ratio, c(-0.4096, 0.0), 1e-12), "{ratio}");
        assert!(out.report.max_defect() < 1e-12);
        assert_eq!(out.report.steps.len(), 3);
        // support on multiples of 2^K after K steps
        assert!(out.residual.max_off_support(8).map_or(0.0, |x| x.1) < 1e-12);
    }

    #[test]
    fn reverse_of_blank_pairs_is_vacuum() {
        let pairs = vec![QubitPairState::blank(); 3];
        let out = reverse_convert(&pairs, cutoff(8)).unwrap();
        match out.state {
            CvOutput::Pure(s) => {
                assert_eq!(s.nnz(), 1);
                assert_eq!(s.coeff(0, 0), c(1.0, 0.0));
            }
            CvOutput::Mixed(_) => panic!("pure input"),
        }
        assert!(out.leftover.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn reverse_single_pairs() {
        let z = c(0.0, 0.0);
        let lambda = 0.5;
        let norm = (1.0f64 + lambda * lambda).sqrt();
        let phi = QubitPairState::pure([c(1.0 / norm, 0.0), z, z, c(-lambda / norm, 0.0)]).unwrap();
        let out = match reverse_convert(&[phi], cutoff(2)).unwrap().state {
            CvOutput::Pure(s) => s,
            CvOutput::Mixed(_) => unreachable!(),
        };
        assert!((out.fidelity(&tmsv(lambda, 2)) - 1.0).abs() < 1e-14);

        let excited = QubitPairState::pure([z, z, z, c(1.0, 0.0)]).unwrap();
        let out = match reverse_convert(std::slice::from_ref(&excited), cutoff(2))
            .unwrap()
            .state
        {
            CvOutput::Pure(s) => s,
            CvOutput::Mixed(_) => unreachable!(),
        };
        assert_eq!(out.nnz(), 1);
        assert_eq!(out.coeff(1, 1), c(-1.0, 0.0));

        let closed = reverse_closed_form(&[excited]).unwrap();
        assert_eq!(closed.coeff(1, 1), c(-1.0, 0.0));
        let blank = reverse_closed_form(&vec![QubitPairState::blank(); 2]).unwrap();
        assert_eq!(blank.coeff(0, 0), c(1.0, 0.0));
    }

    #[test]
    fn closed_form_matches_stepwise() {
        let mut rng = random::rng(3);
        for count in 1..=4 {
            for _ in 0..5 {
                let pairs: Vec<_> = (0..count)
                    .map(|_| random::random_pure_pair(&mut rng))
                    .collect();
                let audit = reverse_phase_audit(&pairs, 1e-10).unwrap();
                assert!(
                    audit.mismatches.is_empty(),
                    "{:?}",
                    audit.mismatches.first()
                );
                assert!((audit.fidelity - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip_recovers_truncated_tmsv() {
        for count in 1..=6u32 {
            for &lambda in &[0.3, 0.6, 0.9] {
                let input = tmsv(lambda, 1 << count);
                let fwd = forward_convert(&input, count, DEFAULT_DEFECT_THRESHOLD).unwrap();
                let back = match reverse_convert(&fwd.pairs, input.cutoff()).unwrap().state {
                    CvOutput::Pure(s) => s,
                    CvOutput::Mixed(_) => unreachable!(),
                };
                let fidelity = back.fidelity(&input);
                assert!(fidelity >= 1.0 - 1e-10, "K={count} λ={lambda}: {fidelity}");
            }
        }
    }

    #[test]
    fn mixed_reverse_leaves_blank_pairs() {
        let mut rng = random::rng(9);
        let pairs: Vec<_> = (0..2)
            .map(|_| random::random_mixed_pair(&mut rng))
            .collect();
        let out = reverse_convert(&pairs, cutoff(4)).unwrap();
        assert!(out.leftover.iter().all(|&w| w.abs() < 1e-12));
        let CvOutput::Mixed(rho) = out.state else {
            panic!("mixed input")
        };
        assert!((rho.matrix.trace().re - 1.0).abs() < 1e-12);
        let too_many: Vec<_> = (0..4)
            .map(|_| random::random_mixed_pair(&mut rng))
            .collect();
        assert!(matches!(
            reverse_convert(&too_many, cutoff(16)).unwrap_err(),
            Error::SizeGuard { .. }
        ));
    }

    #[test]
    fn mixed_reverse_of_pure_densities_matches_pure_path() {
        let mut rng = random::rng(21);
        let pure: Vec<_> = (0..2).map(|_| random::random_pure_pair(&mut rng)).collect();
        let mixed: Vec<_> = pure
            .iter()
            .map(|p| QubitPairState::mixed(p.density()).unwrap())
            .collect();
        let CvOutput::Pure(psi) = reverse_convert(&pure, cutoff(4)).unwrap().state else {
            unreachable!()
        };
        let CvOutput::Mixed(rho) = reverse_convert(&mixed, cutoff(4)).unwrap().state else {
            unreachable!()
        };
        let n = 4;
        for i in 0..n * n {
            for j in 0..n * n {
                let expected = psi.coeff(i / n, i % n) * psi.coeff(j / n, j % n).conj();
                assert!(close(rho.matrix[(i, j)], expected, 1e-12));
            }
        }
    }

    #[test]
    fn diagonal_conversion_of_thermal() {
        use crate::states::make_thermal;
        let t = make_thermal(0.0, cutoff(8), Truncation::default()).unwrap();
        let out = forward_convert_diagonal(&t, 2).unwrap();
        for pair in &out.pairs {
            assert!((pair.blank_weight() - 1.0).abs() < 1e-15);
        }

        // brute-force marginal of the lowest digit at cutoff 16
        let v = 0.5;
        let t = make_thermal(v, cutoff(16), Truncation::permissive()).unwrap();
        let out = forward_convert_diagonal(&t, 1).unwrap();
        let mut c_excited = 0.0;
        for m in (1..16).step_by(2) {
            for n in 0..16 {
                c_excited += t.weight(m, n);
            }
        }
        let rho = out.pairs[0].density();
        let c_prob = rho[(2, 2)].re + rho[(3, 3)].re;
        assert!((c_prob - c_excited).abs() < 1e-15);
        assert!((c_prob - 1.0 / 3.0).abs() < 1e-12);
        assert!(out.defect < 1e-15);
    }

    #[test]
    fn thermal_residual_is_coarse_geometric() {
        use crate::states::make_thermal;
        let v: f64 = 0.8;
        for count in 1..=4u32 {
            let stride = 1usize << count;
            let t = make_thermal(v, cutoff(stride * 8), Truncation::permissive()).unwrap();
            let out = forward_convert_diagonal(&t, count).unwrap();
            assert!(out.defect < 1e-13, "K={count}: {}", out.defect);
            let marginal = out.residual.marginal(true);
            for j in 1..8 {
                let ratio = marginal[j * stride] / marginal[(j - 1) * stride];
                assert!(
                    (ratio - v.powi(stride as i32)).abs() < 1e-12,
                    "K={count} j={j}"
                );
            }
            for (m, w) in marginal.iter().enumerate() {
                if m % stride != 0 {
                    assert_eq!(*w, 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_matches_blocks_and_is_unitary() {
        let n = cutoff(16);
        let mut rng = random::rng(1);
        for k in 1..=4 {
            for dir in [Direction::Forward, Direction::Reverse] {
                let oracle = DenseStepOracle::new(n, k, dir).unwrap();
                let u = oracle.side_unitary();
                let id = DMatrix::<C64>::identity(u.nrows(), u.ncols());
                assert!((u * u.adjoint() - id).norm() < 1e-12);
                for _ in 0..10 {
                    let v = random::random_joint_vector(&mut rng, n);
                    let dense = oracle.apply_vector(&v, Sides::Both).unwrap();
                    let blocks = JointState::from_dense(n, &v)
                        .unwrap()
                        .apply_step(k, dir)
                        .unwrap();
                    let diff = (dense - blocks.to_dense()).norm();
                    assert!(diff < 1e-12, "k={k}: {diff}");

                    let half = oracle.apply_vector(&v, Sides::Only(Side::BD)).unwrap();
                    let blocks =
                        apply_half_step(&JointState::from_dense(n, &v).unwrap(), Side::BD, k, dir)
                            .unwrap();
                    assert!((half - blocks.to_dense()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_generator_structure() {
        // connected components of the single-side generator pattern
        for k in 1..=3u32 {
            let levels = 16;
            let h = DenseStepOracle::generator(cutoff(levels), k);
            let mut pairs = 0;
            let mut singletons = 0;
            for i in 0..h.nrows() {
                match h.row(i).iter().filter(|x| **x != 0.0).count() {
                    0 => singletons += 1,
                    1 => pairs += 1,
                    _ => panic!("row {i} couples to more than one state"),
                }
            }
            let blocks = CouplingBlock::enumerate(k, cutoff(levels)).count();
            assert_eq!(pairs, 2 * blocks);
            assert_eq!(blocks, levels - (1 << (k - 1)));
            assert_eq!(singletons, 2 * (1 << (k - 1)));
        }
    }

    #[test]
    fn oracle_size_guards() {
        assert!(DenseStepOracle::new(cutoff(128), 1, Direction::Forward).is_err());
        let oracle = DenseStepOracle::new(cutoff(32), 1, Direction::Forward).unwrap();
        assert!(oracle.full_matrix().is_err());
    }
}
