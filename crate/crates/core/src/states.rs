//! Truncated two-mode field states, qubit-pair states and the structured
//! Werner mixture.
//!
//! Basis conventions are global: Fock indices ascend from 0, and a qubit pair
//! is written in the order `(--, -+, +-, ++)` with `|->` as bit 0 and `|+>` as
//! bit 1, the first bit belonging to qubit C and the second to qubit D.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_unit_interval_open, Error, Result};

pub type C64 = Complex64;

/// Tail weight allowed by the constructors unless overridden.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Norm tolerance for pure states.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Largest dimension for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 4096;

/// Number of Fock levels kept per mode; basis indices run over `0..levels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::CutoffTooSmall(levels));
        }
        Ok(Self(levels))
    }

    /// Smallest cutoff accepted by a `pairs`-pair protocol run, times `factor`.
    pub fn for_pairs(pairs: u32, factor: usize) -> Result<Self> {
        Self::new((1usize << pairs) * factor.max(1))
    }

    pub fn levels(self) -> usize {
        self.0
    }

    /// Fails unless the cutoff is a multiple of `2^pairs`.
    pub fn check_pairs(self, pairs: u32) -> Result<()> {
        let required = 1usize << pairs;
        if self.0.is_multiple_of(required) {
            Ok(())
        } else {
            Err(Error::CutoffAlignment {
                cutoff: self.0,
                required,
            })
        }
    }
}

impl fmt::Display for FockCutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a constructor does when truncation discards probability mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub tolerance: f64,
    /// Accept tails above `tolerance` (the tail is still reported).
    pub allow_excess: bool,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TAIL_TOLERANCE,
            allow_excess: false,
        }
    }
}

impl Truncation {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            allow_excess: false,
        }
    }

    /// Renormalize whatever the tail is.
    pub fn permissive() -> Self {
        Self {
            tolerance: DEFAULT_TAIL_TOLERANCE,
            allow_excess: true,
        }
    }

    pub fn check(&self, tail: f64, cutoff: FockCutoff) -> Result<()> {
        if self.allow_excess || tail <= self.tolerance {
            Ok(())
        } else {
            Err(Error::Truncation {
                tail,
                tolerance: self.tolerance,
                cutoff: cutoff.levels(),
            })
        }
    }
}

/// Squeezing of a two-mode squeezed vacuum, `lambda = tanh r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TmsvParams {
    lambda: f64,
    r: f64,
}

impl TmsvParams {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        check_unit_interval_open("lambda", lambda)?;
        Ok(Self {
            lambda,
            r: lambda.atanh(),
        })
    }

    pub fn from_r(r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Parameter {
                name: "r",
                value: r,
                expected: "finite r >= 0",
            });
        }
        let lambda = r.tanh();
        // tanh saturates to 1.0 in f64 near r = 19
        check_unit_interval_open("lambda", lambda)?;
        Ok(Self { lambda, r })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

/// Common access to the truncation diagnostics of any CV state.
pub trait TailWeight {
    /// Probability of the untruncated state at or beyond the cutoff in either mode.
    fn tail_weight(&self) -> f64;
}

/// `1 - (1 - x)^2` without cancellation.
fn union_tail(x: f64) -> f64 {
    x * (2.0 - x)
}

/// `base^exponent` with 0^0 = 1.
fn power(base: f64, exponent: usize) -> f64 {
    if exponent == 0 {
        1.0
    } else if base == 0.0 {
        0.0
    } else {
        (exponent as f64 * base.ln()).exp()
    }
}

/// Pure two-mode state, stored sparsely: only nonzero amplitudes `c[m][n]` are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct PureCVState {
    cutoff: FockCutoff,
    amps: BTreeMap<(usize, usize), C64>,
    tail: f64,
}

impl PureCVState {
    pub fn vacuum(cutoff: FockCutoff) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert((0, 0), C64::new(1.0, 0.0));
        Self {
            cutoff,
            amps,
            tail: 0.0,
        }
    }

    /// Builds a state from amplitudes, which must already be normalized.
    pub fn from_entries<I>(cutoff: FockCutoff, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), C64)>,
    {
        let state = Self::collect(cutoff, entries, 0.0)?;
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Normalization(norm));
        }
        Ok(state)
    }

    /// Builds a state from amplitudes and rescales it to unit norm.
    pub fn from_entries_normalized<I>(cutoff: FockCutoff, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), C64)>,
    {
        let mut state = Self::collect(cutoff, entries, 0.0)?;
        state.renormalize()?;
        Ok(state)
    }

    pub fn from_dense(cutoff: FockCutoff, coeffs: &DMatrix<C64>) -> Result<Self> {
        let n = cutoff.levels();
        if coeffs.nrows() != n || coeffs.ncols() != n {
            return Err(Error::Parameter {
                name: "coefficient matrix size",
                value: coeffs.nrows() as f64,
                expected: "square matrix matching the cutoff",
            });
        }
        let entries = (0..n).flat_map(|m| (0..n).map(move |k| (m, k)));
        Self::from_entries(cutoff, entries.map(|(m, k)| ((m, k), coeffs[(m, k)])))
    }

    fn collect<I>(cutoff: FockCutoff, entries: I, tail: f64) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), C64)>,
    {
        let n = cutoff.levels();
        let mut amps = BTreeMap::new();
        for ((m, k), a) in entries {
            if m >= n || k >= n {
                return Err(Error::Parameter {
                    name: "Fock index",
                    value: m.max(k) as f64,
                    expected: "index below the cutoff",
                });
            }
            *amps.entry((m, k)).or_insert(C64::new(0.0, 0.0)) += a;
        }
        amps.retain(|_, a| *a != C64::new(0.0, 0.0));
        Ok(Self { cutoff, amps, tail })
    }

    pub(crate) fn from_map_unchecked(
        cutoff: FockCutoff,
        amps: BTreeMap<(usize, usize), C64>,
        tail: f64,
    ) -> Self {
        Self { cutoff, amps, tail }
    }

    fn renormalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Normalization(norm));
        }
        let scale = norm.sqrt().recip();
        for a in self.amps.values_mut() {
            *a *= scale;
        }
        Ok(())
    }

    pub(crate) fn with_tail(mut self, tail: f64) -> Self {
        self.tail = tail;
        self
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn coeff(&self, m: usize, n: usize) -> C64 {
        self.amps.get(&(m, n)).copied().unwrap_or_default()
    }

    /// Nonzero amplitudes in ascending `(m, n)` order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), C64)> + '_ {
        self.amps.iter().map(|(&k, &a)| (k, a))
    }

    pub fn nnz(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        let n = self.cutoff.levels();
        if n > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                dim: n,
                limit: DENSE_LIMIT,
            });
        }
        let mut out = DMatrix::zeros(n, n);
        for (&(m, k), &a) in &self.amps {
            out[(m, k)] = a;
        }
        Ok(out)
    }

    /// `<self|other>`; states with different cutoffs are compared on their common support.
    pub fn inner(&self, other: &PureCVState) -> C64 {
        self.amps
            .iter()
            .filter_map(|(key, a)| other.amps.get(key).map(|b| a.conj() * b))
            .sum()
    }

    pub fn fidelity(&self, other: &PureCVState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// The same state with modes A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            cutoff: self.cutoff,
            amps: self.amps.iter().map(|(&(m, n), &a)| ((n, m), a)).collect(),
            tail: self.tail,
        }
    }

    /// Largest amplitude whose Fock labels are not both multiples of `stride`.
    pub fn max_off_support(&self, stride: usize) -> Option<((usize, usize), f64)> {
        self.amps
            .iter()
            .filter(|(&(m, n), _)| m % stride != 0 || n % stride != 0)
            .map(|(&key, a)| (key, a.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

impl TailWeight for PureCVState {
    fn tail_weight(&self) -> f64 {
        self.tail
    }
}

/// Two-mode squeezed vacuum `sqrt(1-l^2) sum_m l^m |m m>`, truncated to the
/// cutoff and renormalized.
pub fn make_tmsv(
    params: TmsvParams,
    cutoff: FockCutoff,
    truncation: Truncation,
) -> Result<PureCVState> {
    let lambda = params.lambda();
    let n = cutoff.levels();
    let tail = power(lambda, 2 * n);
    truncation.check(tail, cutoff)?;

    // sum_{m<n} l^{2m} = (1 - l^{2n}) / (1 - l^2)
    let scale = ((1.0 - lambda * lambda) / (1.0 - tail)).sqrt();
    let mut amps = BTreeMap::new();
    for m in 0..n {
        let a = scale * power(lambda, m);
        if a == 0.0 {
            break;
        }
        amps.insert((m, m), C64::new(a, 0.0));
    }
    Ok(PureCVState::from_map_unchecked(cutoff, amps, tail))
}

/// Diagonal two-mode mixture `sum w[m][n] |mn><mn|`, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalCVMixture {
    cutoff: FockCutoff,
    weights: Vec<f64>,
    tail: f64,
}

/// Largest cutoff for which a diagonal mixture is stored.
pub const DIAGONAL_LIMIT: usize = 2048;

impl DiagonalCVMixture {
    /// Weights in row-major order (`w[m * levels + n]`); they must sum to one.
    pub fn from_weights(cutoff: FockCutoff, weights: Vec<f64>) -> Result<Self> {
        let n = cutoff.levels();
        if n > DIAGONAL_LIMIT {
            return Err(Error::SizeGuard {
                dim: n,
                limit: DIAGONAL_LIMIT,
            });
        }
        if weights.len() != n * n {
            return Err(Error::Parameter {
                name: "weight count",
                value: weights.len() as f64,
                expected: "levels^2 weights",
            });
        }
        if let Some(&w) = weights.iter().find(|w| w.is_nan() || **w < 0.0) {
            return Err(Error::Parameter {
                name: "weight",
                value: w,
                expected: "nonnegative",
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Normalization(total));
        }
        Ok(Self {
            cutoff,
            weights,
            tail: 0.0,
        })
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn weight(&self, m: usize, n: usize) -> f64 {
        self.weights[m * self.cutoff.levels() + n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Marginal distribution of mode A (`first = true`) or mode B.
    pub fn marginal(&self, first: bool) -> Vec<f64> {
        let n = self.cutoff.levels();
        let mut out = vec![0.0; n];
        for m in 0..n {
            for k in 0..n {
                let idx = if first { m } else { k };
                out[idx] += self.weight(m, k);
            }
        }
        out
    }

    pub(crate) fn with_tail(mut self, tail: f64) -> Self {
        self.tail = tail;
        self
    }
}

impl TailWeight for DiagonalCVMixture {
    fn tail_weight(&self) -> f64 {
        self.tail
    }
}

/// Two-mode thermal state `(1-v)^2 sum v^{m+n} |mn><mn|`, truncated and renormalized.
pub fn make_thermal(
    v: f64,
    cutoff: FockCutoff,
    truncation: Truncation,
) -> Result<DiagonalCVMixture> {
    check_unit_interval_open("v", v)?;
    let n = cutoff.levels();
    let mode_tail = power(v, n);
    let tail = union_tail(mode_tail);
    truncation.check(tail, cutoff)?;

    let mode: Vec<f64> = (0..n)
        .map(|m| (1.0 - v) * power(v, m) / (1.0 - mode_tail))
        .collect();
    let weights = mode
        .iter()
        .flat_map(|a| mode.iter().map(move |b| a * b))
        .collect();
    Ok(DiagonalCVMixture::from_weights(cutoff, weights)?.with_tail(tail))
}

/// CV Werner state `p |TMSV><TMSV| + (1-p) rho_thermal`, kept as its two branches.
#[derive(Clone, Debug, PartialEq)]
pub struct WernerCVState {
    p: f64,
    lambda: f64,
    v: f64,
    pure_branch: PureCVState,
    thermal_branch: DiagonalCVMixture,
}

pub fn make_werner(
    p: f64,
    lambda: f64,
    v: f64,
    cutoff: FockCutoff,
    truncation: Truncation,
) -> Result<WernerCVState> {
    check_probability("p", p)?;
    let params = TmsvParams::from_lambda(lambda)?;
    check_unit_interval_open("v", v)?;
    // A branch with zero weight contributes no truncation error.
    let pure_policy = if p == 0.0 {
        Truncation::permissive()
    } else {
        truncation
    };
    let thermal_policy = if p == 1.0 {
        Truncation::permissive()
    } else {
        truncation
    };
    Ok(WernerCVState {
        p,
        lambda,
        v,
        pure_branch: make_tmsv(params, cutoff, pure_policy)?,
        thermal_branch: make_thermal(v, cutoff, thermal_policy)?,
    })
}

impl WernerCVState {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.pure_branch.cutoff()
    }

    pub fn pure_branch(&self) -> &PureCVState {
        &self.pure_branch
    }

    pub fn thermal_branch(&self) -> &DiagonalCVMixture {
        &self.thermal_branch
    }

    pub fn pure_weight(&self) -> f64 {
        self.p
    }

    pub fn thermal_weight(&self) -> f64 {
        1.0 - self.p
    }

    pub fn trace(&self) -> f64 {
        self.p * self.pure_branch.norm_sqr() + (1.0 - self.p) * self.thermal_branch.total()
    }
}

impl TailWeight for WernerCVState {
    fn tail_weight(&self) -> f64 {
        self.p * self.pure_branch.tail_weight() + (1.0 - self.p) * self.thermal_branch.tail_weight()
    }
}

/// One C-D qubit pair, pure or mixed, in the `(--, -+, +-, ++)` basis.
#[derive(Clone, Debug, PartialEq)]
pub enum QubitPairState {
    Pure([C64; 4]),
    Mixed(Matrix4<C64>),
}

/// Basis index of the pair state with qubit values `c` and `d` (0 = `-`, 1 = `+`).
pub const fn pair_index(c: usize, d: usize) -> usize {
    2 * c + d
}

impl QubitPairState {
    /// `|-->`.
    pub fn blank() -> Self {
        let zero = C64::new(0.0, 0.0);
        Self::Pure([C64::new(1.0, 0.0), zero, zero, zero])
    }

    pub fn pure(amps: [C64; 4]) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidPair(format!("squared norm {norm} is not 1")));
        }
        Ok(Self::Pure(amps))
    }

    pub fn pure_normalized(amps: [C64; 4]) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidPair(format!(
                "cannot normalize amplitudes with norm {norm}"
            )));
        }
        Ok(Self::Pure(amps.map(|a| a / norm)))
    }

    pub fn mixed(rho: Matrix4<C64>) -> Result<Self> {
        let herm = (rho - rho.adjoint()).map(|z| z.norm()).max();
        if herm > 1e-10 {
            return Err(Error::InvalidPair(format!(
                "density not Hermitian (deviation {herm:e})"
            )));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > NORM_TOLERANCE || trace.im.abs() > NORM_TOLERANCE {
            return Err(Error::InvalidPair(format!(
                "density trace {trace} is not 1"
            )));
        }
        let hermitian = (rho + rho.adjoint()).scale(0.5);
        let min_eig = hermitian.symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(Error::InvalidPair(format!(
                "density not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self::Mixed(rho))
    }

    /// Diagonal product state with qubit probabilities `c = (P-, P+)` and `d = (P-, P+)`.
    pub fn product_diagonal(c: [f64; 2], d: [f64; 2]) -> Result<Self> {
        let mut rho = Matrix4::zeros();
        for (qc, pc) in c.iter().enumerate() {
            for (qd, pd) in d.iter().enumerate() {
                let i = pair_index(qc, qd);
                rho[(i, i)] = C64::new(pc * pd, 0.0);
            }
        }
        Self::mixed(rho)
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Self::Pure(_))
    }

    pub fn amplitudes(&self) -> Option<&[C64; 4]> {
        match self {
            Self::Pure(a) => Some(a),
            Self::Mixed(_) => None,
        }
    }

    pub fn density(&self) -> Matrix4<C64> {
        match self {
            Self::Pure(a) => Matrix4::from_fn(|i, j| a[i] * a[j].conj()),
            Self::Mixed(rho) => *rho,
        }
    }

    /// Population of the `|-->` component.
    pub fn blank_weight(&self) -> f64 {
        match self {
            Self::Pure(a) => a[0].norm_sqr(),
            Self::Mixed(rho) => rho[(0, 0)].re,
        }
    }
}

impl Serialize for QubitPairState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let values: Vec<C64> = match self {
            Self::Pure(a) => a.to_vec(),
            // row-major, unlike nalgebra's column-major storage
            Self::Mixed(rho) => (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|ij| rho[ij])
                .collect(),
        };
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for z in values {
            seq.serialize_element(&[z.re, z.im])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for QubitPairState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<[f64; 2]> = Vec::deserialize(deserializer)?;
        let values: Vec<C64> = raw.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        match values.len() {
            4 => Self::pure([values[0], values[1], values[2], values[3]]),
            16 => Self::mixed(Matrix4::from_row_slice(&values)),
            n => Err(Error::InvalidPair(format!(
                "expected 4 amplitudes or 16 density entries, got {n}"
            ))),
        }
        .map_err(de::Error::custom)
    }
}

/// Density matrix of `pairs[0] ⊗ pairs[1] ⊗ ...` reordered as `C-register ⊗ D-register`.
///
/// Register index `c = sum_k c_k 2^k` places pair `k` (0-based) at bit `k`;
/// the full row index is `c * 2^K + d`.
pub fn qubit_register_density(pairs: &[QubitPairState]) -> Result<DMatrix<C64>> {
    let k = pairs.len();
    if k == 0 {
        return Err(Error::NoPairs);
    }
    let side = 1usize << k;
    let dim = side * side;
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            dim,
            limit: DENSE_LIMIT,
        });
    }
    let densities: Vec<Matrix4<C64>> = pairs.iter().map(QubitPairState::density).collect();
    let bit = |x: usize, j: usize| (x >> j) & 1;
    Ok(DMatrix::from_fn(dim, dim, |row, col| {
        let (c, d) = (row / side, row % side);
        let (c2, d2) = (col / side, col % side);
        densities
            .iter()
            .enumerate()
            .map(|(j, rho)| {
                rho[(
                    pair_index(bit(c, j), bit(d, j)),
                    pair_index(bit(c2, j), bit(d2, j)),
                )]
            })
            .product()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cutoff(n: usize) -> FockCutoff {
        FockCutoff::new(n).unwrap()
    }

    #[test]
    fn tmsv_vacuum_limit() {
        let s = make_tmsv(
            TmsvParams::from_lambda(0.0).unwrap(),
            cutoff(4),
            Truncation::default(),
        )
        .unwrap();
        assert_eq!(s.coeff(0, 0), C64::new(1.0, 0.0));
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.tail_weight(), 0.0);
    }

    #[test]
    fn tmsv_two_level_renormalization() {
        let s = make_tmsv(
            TmsvParams::from_lambda(0.5).unwrap(),
            cutoff(2),
            Truncation::permissive(),
        )
        .unwrap();
        assert!((s.coeff(0, 0).re - (1.0f64 / 1.25).sqrt()).abs() < 1e-15);
        assert!((s.coeff(1, 1).re - (0.25f64 / 1.25).sqrt()).abs() < 1e-15);
        assert!((s.tail_weight() - 0.5f64.powi(4)).abs() < 1e-16);
    }

    #[test]
    fn tmsv_diagonal_geometric() {
        let s = make_tmsv(
            TmsvParams::from_lambda(0.5).unwrap(),
            cutoff(64),
            Truncation::default(),
        )
        .unwrap();
        assert!(s.iter().all(|((m, n), _)| m == n));
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((s.tail_weight() - 0.5f64.powi(128)).abs() < 1e-50);
        let first = s.coeff(0, 0).re;
        assert!((first - 0.75f64.sqrt()).abs() < 1e-15);
        for m in 1..64 {
            let ratio = s.coeff(m, m).re / s.coeff(m - 1, m - 1).re;
            assert!((ratio - 0.5).abs() < 1e-13, "m = {m}: {ratio}");
        }
    }

    #[test]
    fn tmsv_rejects_large_tail() {
        let err = make_tmsv(
            TmsvParams::from_lambda(0.9).unwrap(),
            cutoff(8),
            Truncation::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
        assert!(TmsvParams::from_lambda(1.0).is_err());
        assert!(TmsvParams::from_lambda(-0.1).is_err());
    }

    #[test]
    fn tail_weight_closed_forms() {
        let s = make_tmsv(
            TmsvParams::from_lambda(0.9).unwrap(),
            cutoff(256),
            Truncation::default(),
        )
        .unwrap();
        let expected = 0.9f64.powi(512);
        assert!((s.tail_weight() / expected - 1.0).abs() < 1e-12);

        let t = make_thermal(0.5, cutoff(8), Truncation::permissive()).unwrap();
        let expected = 1.0 - (1.0 - 0.5f64.powi(8)).powi(2);
        assert!((t.tail_weight() - expected).abs() < 1e-16);
    }

    #[test]
    fn params_from_r() {
        let p = TmsvParams::from_r(1.0).unwrap();
        assert!((p.lambda() - 1.0f64.tanh()).abs() < 1e-15);
        let q = TmsvParams::from_lambda(p.lambda()).unwrap();
        assert!((q.r() - 1.0).abs() < 1e-12);
        assert!(TmsvParams::from_r(-1.0).is_err());
    }

    #[test]
    fn thermal_weights() {
        let t = make_thermal(0.0, cutoff(4), Truncation::default()).unwrap();
        assert_eq!(t.weight(0, 0), 1.0);

        let t = make_thermal(0.5, cutoff(64), Truncation::default()).unwrap();
        assert!((t.weight(1, 2) - 0.03125).abs() < 1e-15);
        let marginal = t.marginal(false);
        for n in 1..20 {
            assert!((marginal[n] / marginal[n - 1] - 0.5).abs() < 1e-12);
        }
        assert!((t.total() - 1.0).abs() < 1e-12);
        assert!(make_thermal(1.0, cutoff(4), Truncation::default()).is_err());
    }

    /// Binary digit k of a truncated geometric photon number is Bernoulli
    /// with odds v^(2^(k-1)) : 1, independently across digits.
    #[test]
    fn thermal_digits_independent() {
        let v = 0.6;
        for digits in 1..=4u32 {
            let n = 1usize << digits;
            let t = make_thermal(v, cutoff(n), Truncation::permissive()).unwrap();
            let marginal = t.marginal(true);
            for (m, &weight) in marginal.iter().enumerate() {
                let mut product = 1.0;
                for k in 0..digits {
                    let odds = v.powi(1 << k);
                    let bit = (m >> k) & 1;
                    product *= if bit == 1 { odds } else { 1.0 } / (1.0 + odds);
                }
                assert!((weight - product).abs() < 1e-14, "K={digits} m={m}");
            }
        }
    }

    #[test]
    fn werner_branches() {
        let c = cutoff(64);
        let w1 = make_werner(1.0, 0.5, 0.5, c, Truncation::default()).unwrap();
        assert_eq!(w1.thermal_weight(), 0.0);
        let tmsv = make_tmsv(
            TmsvParams::from_lambda(0.5).unwrap(),
            c,
            Truncation::default(),
        )
        .unwrap();
        assert_eq!(w1.pure_branch(), &tmsv);

        let w0 = make_werner(0.0, 0.5, 0.5, c, Truncation::default()).unwrap();
        assert_eq!(w0.pure_weight(), 0.0);

        let w = make_werner(0.5, 0.5, 0.5, c, Truncation::default()).unwrap();
        assert!((w.trace() - 1.0).abs() < 1e-12);

        assert!(make_werner(1.5, 0.5, 0.5, c, Truncation::default()).is_err());
        assert!(make_werner(0.5, 0.5, 1.0, c, Truncation::default()).is_err());
    }

    #[test]
    fn pair_validation() {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        assert!(QubitPairState::pure([one, one, z, z]).is_err());
        assert!(QubitPairState::pure_normalized([z; 4]).is_err());
        let bell = QubitPairState::pure_normalized([one, z, z, -one]).unwrap();
        let rho = bell.density();
        assert!(QubitPairState::mixed(rho).is_ok());
        let mut bad = rho;
        bad[(0, 0)] = C64::new(-0.1, 0.0);
        bad[(3, 3)] = C64::new(0.6, 0.0);
        assert!(QubitPairState::mixed(bad).is_err());
    }

    #[test]
    fn pair_json_shapes() {
        let z = C64::new(0.0, 0.0);
        let pure = QubitPairState::pure_normalized([C64::new(2.0, 0.0), z, z, C64::new(0.0, -1.0)])
            .unwrap();
        let text = serde_json::to_string(&pure).unwrap();
        let back: QubitPairState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pure);

        let mixed = QubitPairState::product_diagonal([0.75, 0.25], [0.5, 0.5]).unwrap();
        let value = serde_json::to_value(&mixed).unwrap();
        assert_eq!(value.as_array().unwrap().len(), 16);

        let err = serde_json::from_str::<QubitPairState>("[[1,0],[0,0],[0,0]]").unwrap_err();
        assert!(err.to_string().contains("got 3"));
    }

    #[test]
    fn register_density_bit_order() {
        // pair 0 excited on C only, pair 1 excited on D only
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let first = QubitPairState::pure([z, z, one, z]).unwrap();
        let second = QubitPairState::pure([z, one, z, z]).unwrap();
        let rho = qubit_register_density(&[first, second]).unwrap();
        // c = 0b01, d = 0b10
        let idx = 4 + 0b10;
        assert_eq!(rho[(idx, idx)], one);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
    }
}
