//! Entanglement measures.
//!
//! Pure states use the entropy of entanglement (base 2) over the Schmidt
//! spectrum. Sparse coefficient matrices are split into connected blocks
//! first, so a diagonal state of any size costs one pass. Mixed states use
//! logarithmic negativity, either from a dense partial transpose or from a
//! block-structured spectrum of 1×1 and 2×2 blocks.

use std::collections::HashMap;

use nalgebra::{DMatrix, SVD};

use crate::error::{check_probability, check_unit_interval_open, Error, Result};
use crate::evolution::{JointState, WernerConversion};
use crate::states::{
    pair_index, qubit_register_density, PureCVState, QubitPairState, C64, DENSE_LIMIT,
};

/// Schmidt probabilities below this are dropped before the entropy sum.
pub const SCHMIDT_FLOOR: f64 = 1e-15;

/// Tolerance on the unit trace of a partial-transpose spectrum.
pub const SPECTRUM_TRACE_TOLERANCE: f64 = 1e-10;

const STATE_NORM_TOLERANCE: f64 = 1e-10;
const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Squared Schmidt coefficients, nonincreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum(Vec<f64>);

impl SchmidtSpectrum {
    pub fn from_probabilities(mut probs: Vec<f64>) -> Self {
        probs.sort_by(|a, b| b.total_cmp(a));
        Self(probs)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `-sum p log2 p`.
    pub fn entropy(&self) -> f64 {
        let h: f64 = self
            .0
            .iter()
            .filter(|&&p| p > SCHMIDT_FLOOR)
            .map(|&p| -p * p.log2())
            .sum();
        h.max(0.0)
    }
}

/// Schmidt spectrum of a sparse coefficient matrix given as `(row, col, amplitude)`.
pub fn schmidt_spectrum_sparse<I>(entries: I) -> Result<SchmidtSpectrum>
where
    I: IntoIterator<Item = (usize, usize, C64)>,
{
    let entries: Vec<(usize, usize, C64)> = entries.into_iter().collect();
    // rows and columns are nodes of one bipartite graph
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    let mut parent: Vec<usize> = Vec::new();
    let node = |map: &mut HashMap<usize, usize>, key: usize, parent: &mut Vec<usize>| {
        *map.entry(key).or_insert_with(|| {
            parent.push(parent.len());
            parent.len() - 1
        })
    };
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut edges = Vec::with_capacity(entries.len());
    for &(r, c, _) in &entries {
        let a = node(&mut rows, r, &mut parent);
        let b = node(&mut cols, c, &mut parent);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
        edges.push((a, b));
    }

    let mut blocks: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &(a, _)) in edges.iter().enumerate() {
        let root = find(&mut parent, a);
        blocks.entry(root).or_default().push(i);
    }

    let mut probs = Vec::with_capacity(entries.len());
    for members in blocks.values() {
        if let [only] = members.as_slice() {
            probs.push(entries[*only].2.norm_sqr());
            continue;
        }
        let mut local_rows: HashMap<usize, usize> = HashMap::new();
        let mut local_cols: HashMap<usize, usize> = HashMap::new();
        for &i in members {
            let n = local_rows.len();
            local_rows.entry(edges[i].0).or_insert(n);
            let n = local_cols.len();
            local_cols.entry(edges[i].1).or_insert(n);
        }
        let (nr, nc) = (local_rows.len(), local_cols.len());
        if nr.max(nc) > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                dim: nr.max(nc),
                limit: DENSE_LIMIT,
            });
        }
        let mut block = DMatrix::<C64>::zeros(nr, nc);
        for &i in members {
            block[(local_rows[&edges[i].0], local_cols[&edges[i].1])] += entries[i].2;
        }
        let sigma = SVD::new(block, false, false).singular_values;
        probs.extend(sigma.iter().map(|s| s * s));
    }
    Ok(SchmidtSpectrum::from_probabilities(probs))
}

/// A pure state with a fixed bipartition.
pub trait Bipartite {
    fn schmidt_spectrum(&self) -> Result<SchmidtSpectrum>;
}

fn check_norm(norm: f64) -> Result<()> {
    if (norm - 1.0).abs() > STATE_NORM_TOLERANCE {
        Err(Error::Normalization(norm))
    } else {
        Ok(())
    }
}

/// Split A | B.
impl Bipartite for PureCVState {
    fn schmidt_spectrum(&self) -> Result<SchmidtSpectrum> {
        check_norm(self.norm_sqr())?;
        schmidt_spectrum_sparse(self.iter().map(|((m, n), a)| (m, n, a)))
    }
}

/// Split C | D.
impl Bipartite for QubitPairState {
    fn schmidt_spectrum(&self) -> Result<SchmidtSpectrum> {
        let a = self.amplitudes().ok_or_else(|| {
            Error::InvalidPair("entropy of entanglement needs a pure pair".into())
        })?;
        check_norm(a.iter().map(|z| z.norm_sqr()).sum())?;
        let entries = (0..2).flat_map(|c| (0..2).map(move |d| (c, d, a[pair_index(c, d)])));
        schmidt_spectrum_sparse(entries)
    }
}

/// Split AC | BD.
impl Bipartite for JointState {
    fn schmidt_spectrum(&self) -> Result<SchmidtSpectrum> {
        check_norm(self.norm_sqr())?;
        schmidt_spectrum_sparse(
            self.iter()
                .map(|((m, n, qc, qd), a)| (2 * m + qc, 2 * n + qd, a)),
        )
    }
}

/// Entropy of entanglement in ebits.
pub fn entropy_of_entanglement<S: Bipartite + ?Sized>(state: &S) -> Result<f64> {
    Ok(state.schmidt_spectrum()?.entropy())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Transposes the indices of one subsystem; row index is `a * dim_b + b`.
pub fn partial_transpose(
    rho: &DMatrix<C64>,
    dims: (usize, usize),
    subsystem: Subsystem,
) -> Result<DMatrix<C64>> {
    let (da, db) = dims;
    let dim = da * db;
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            dim,
            limit: DENSE_LIMIT,
        });
    }
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::Parameter {
            name: "density size",
            value: rho.nrows() as f64,
            expected: "square of dimension dim_a * dim_b",
        });
    }
    Ok(DMatrix::from_fn(dim, dim, |row, col| {
        let (a, b) = (row / db, row % db);
        let (a2, b2) = (col / db, col % db);
        match subsystem {
            Subsystem::First => rho[(a2 * db + b, a * db + b2)],
            Subsystem::Second => rho[(a * db + b2, a2 * db + b)],
        }
    }))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    let deviation = (m - m.adjoint()).map(|z| z.norm()).max();
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(deviation));
    }
    let symmetric = (m + m.adjoint()).scale(0.5);
    let mut eig: Vec<f64> = symmetric.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Partial-transpose eigenvalues (first subsystem transposed).
pub fn pt_eigenvalues(rho: &DMatrix<C64>, dims: (usize, usize)) -> Result<Vec<f64>> {
    hermitian_eigenvalues(&partial_transpose(rho, dims, Subsystem::First)?)
}

/// `log2 ||ρ^{T_A}||_1`.
pub fn log_negativity_dense(rho: &DMatrix<C64>, dims: (usize, usize)) -> Result<f64> {
    let deviation = (rho - rho.adjoint()).map(|z| z.norm()).max();
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(deviation));
    }
    let eig = pt_eigenvalues(rho, dims)?;
    Ok(eig.iter().map(|x| x.abs()).sum::<f64>().log2())
}

/// Eigenvalues of a partial transpose with multiplicities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PTSpectrum {
    entries: Vec<(f64, usize)>,
}

impl PTSpectrum {
    pub fn new(entries: Vec<(f64, usize)>) -> Self {
        Self { entries }
    }

    fn push(&mut self, value: f64) {
        self.entries.push((value, 1));
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.iter().map(|&(x, k)| x * k as f64).sum()
    }

    pub fn trace_norm(&self) -> f64 {
        self.entries.iter().map(|&(x, k)| x.abs() * k as f64).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(x, _)| x)
            .fold(f64::INFINITY, f64::min)
    }

    /// Every eigenvalue repeated by multiplicity, ascending.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|&(x, k)| std::iter::repeat_n(x, k))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|&(_, k)| k).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `log2 sum |x|`; the spectrum must have unit trace.
pub fn log_negativity_from_spectrum(spectrum: &PTSpectrum) -> Result<f64> {
    let trace = spectrum.trace();
    if (trace - 1.0).abs() > SPECTRUM_TRACE_TOLERANCE {
        return Err(Error::SpectrumTrace(trace));
    }
    Ok(spectrum.trace_norm().log2())
}

/// How the Werner eigenvalue lists are normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WernerNormalization {
    /// Infinite-dimensional weights `(1-λ²)` and `(1-v)²`, listed up to the level count.
    Untruncated,
    /// Weights renormalized over `levels` Fock (or register) states per side.
    Truncated,
}

/// Partial-transpose spectrum of `p ρ_TMSV + (1-p) ρ_T` from its block structure.
///
/// One 1×1 block per `|l l>` and one 2×2 block per `{|m n>, |n m>}` with `m < n`.
pub fn werner_pt_spectrum_cv(
    p: f64,
    lambda: f64,
    v: f64,
    levels: usize,
    normalization: WernerNormalization,
) -> Result<PTSpectrum> {
    check_probability("p", p)?;
    check_unit_interval_open("lambda", lambda)?;
    check_unit_interval_open("v", v)?;
    if levels == 0 {
        return Err(Error::CutoffTooSmall(levels));
    }
    let (pure_norm, thermal_norm) = match normalization {
        WernerNormalization::Untruncated => (1.0 - lambda * lambda, (1.0 - v) * (1.0 - v)),
        WernerNormalization::Truncated => {
            let l = levels as f64;
            let pure_tail = if lambda == 0.0 {
                0.0
            } else {
                (2.0 * l * lambda.ln()).exp()
            };
            let mode_tail = if v == 0.0 { 0.0 } else { (l * v.ln()).exp() };
            (
                (1.0 - lambda * lambda) / (1.0 - pure_tail),
                (1.0 - v) * (1.0 - v) / ((1.0 - mode_tail) * (1.0 - mode_tail)),
            )
        }
    };
    let lambda_pow: Vec<f64> = powers(lambda, 2 * levels);
    let v_pow: Vec<f64> = powers(v, 2 * levels);

    let mut spectrum = PTSpectrum::default();
    for l in 0..levels {
        spectrum.push(p * pure_norm * lambda_pow[2 * l] + (1.0 - p) * thermal_norm * v_pow[2 * l]);
    }
    for m in 0..levels {
        for n in m + 1..levels {
            let thermal = (1.0 - p) * thermal_norm * v_pow[m + n];
            let coherence = p * pure_norm * lambda_pow[m + n];
            spectrum.push(thermal + coherence);
            spectrum.push(thermal - coherence);
        }
    }
    Ok(spectrum)
}

fn powers(base: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| {
            if j == 0 {
                1.0
            } else if base == 0.0 {
                0.0
            } else {
                (j as f64 * base.ln()).exp()
            }
        })
        .collect()
}

/// Levels per mode beyond which the untruncated Werner blocks carry less than
/// `tolerance` of trace norm.
///
/// Bound: the omitted pure coherences sum to at most `2(1+λ)λ^L/(1-λ)` and the
/// omitted thermal weight to at most `2v^L`.
pub fn werner_levels_for(p: f64, lambda: f64, v: f64, tolerance: f64) -> usize {
    let bound = |l: usize| {
        let li = l as i32;
        let pure = if lambda == 0.0 {
            0.0
        } else {
            2.0 * (1.0 + lambda) * lambda.powi(li) / (1.0 - lambda)
        };
        let thermal = 2.0 * v.powi(li);
        p * pure + (1.0 - p) * thermal
    };
    let mut levels = 1;
    while bound(levels) >= tolerance {
        levels += 1;
    }
    levels
}

/// Tail tolerance used when approximating the untruncated Werner spectrum.
pub const WERNER_TAIL_TOLERANCE: f64 = 1e-12;

/// Untruncated Werner logarithmic negativity with the level count it used.
pub fn werner_log_negativity_cv(p: f64, lambda: f64, v: f64) -> Result<(f64, usize)> {
    let levels = werner_levels_for(p, lambda, v, WERNER_TAIL_TOLERANCE);
    let spectrum = werner_pt_spectrum_cv(p, lambda, v, levels, WernerNormalization::Untruncated)?;
    Ok((log_negativity_from_spectrum(&spectrum)?, levels))
}

/// Largest pair count for [`converted_werner_pt_spectrum`].
pub const STRUCTURED_MAX_PAIRS: usize = 12;

/// Partial-transpose (over the C register) spectrum of a converted Werner
/// state, assembled from the extracted pair data block by block.
pub fn converted_werner_pt_spectrum(conversion: &WernerConversion) -> Result<PTSpectrum> {
    werner_register_pt_spectrum(
        conversion.p,
        &conversion.pure.pairs,
        &conversion.thermal.pairs,
    )
}

/// Partial-transpose spectrum of `p ⊗_k pure_k + (1-p) ⊗_k thermal_k` over
/// the first `pure.len()` pairs, where the pure pairs have support on
/// `|-->`, `|++>` and the thermal pairs are diagonal.
pub fn werner_register_pt_spectrum(
    p: f64,
    pure_pairs: &[QubitPairState],
    thermal_pairs: &[QubitPairState],
) -> Result<PTSpectrum> {
    check_probability("p", p)?;
    let count = pure_pairs.len();
    if thermal_pairs.len() != count {
        return Err(Error::InvalidPair(format!(
            "{count} pure-branch pairs but {} thermal-branch pairs",
            thermal_pairs.len()
        )));
    }
    if count == 0 {
        return Err(Error::NoPairs);
    }
    if count > STRUCTURED_MAX_PAIRS {
        return Err(Error::SizeGuard {
            dim: count,
            limit: STRUCTURED_MAX_PAIRS,
        });
    }
    let side = 1usize << count;

    let mut pure = Vec::with_capacity(count);
    for pair in pure_pairs {
        let a = pair
            .amplitudes()
            .ok_or_else(|| Error::InvalidPair("pure branch pair is mixed".into()))?;
        let off = a[pair_index(0, 1)].norm_sqr() + a[pair_index(1, 0)].norm_sqr();
        if off > 1e-12 {
            return Err(Error::InvalidPair(format!(
                "pure branch pair has weight {off:e} on |-+>, |+->"
            )));
        }
        pure.push(*a);
    }
    let mut thermal = Vec::with_capacity(count);
    for pair in thermal_pairs {
        let rho = pair.density();
        let off = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|ij| rho[ij].norm())
            .fold(0.0, f64::max);
        if off > 1e-12 {
            return Err(Error::InvalidPair(
                "thermal branch pair is not diagonal".into(),
            ));
        }
        thermal.push([
            rho[(0, 0)].re,
            rho[(1, 1)].re,
            rho[(2, 2)].re,
            rho[(3, 3)].re,
        ]);
    }

    let bit = |x: usize, j: usize| (x >> j) & 1;
    let coherent: Vec<C64> = (0..side)
        .map(|n| {
            pure.iter()
                .enumerate()
                .map(|(j, a)| a[pair_index(bit(n, j), bit(n, j))])
                .product()
        })
        .collect();
    let population = |c: usize, d: usize| -> f64 {
        thermal
            .iter()
            .enumerate()
            .map(|(j, t)| t[pair_index(bit(c, j), bit(d, j))])
            .product()
    };

    let mut spectrum = PTSpectrum::default();
    for (l, z) in coherent.iter().enumerate() {
        spectrum.push(p * z.norm_sqr() + (1.0 - p) * population(l, l));
    }
    for m in 0..side {
        for n in m + 1..side {
            let a = (1.0 - p) * population(m, n);
            let b = (1.0 - p) * population(n, m);
            let z = (p * coherent[n] * coherent[m].conj()).norm();
            let mean = 0.5 * (a + b);
            let radius = (0.25 * (a - b) * (a - b) + z * z).sqrt();
            spectrum.push(mean + radius);
            spectrum.push(mean - radius);
        }
    }
    Ok(spectrum)
}

/// Largest pair count for which the tensor-product side is built densely.
pub const ADDITIVITY_MAX_PAIRS: usize = 3;

/// `(sum of pair LNs, LN of the tensor product)`.
pub fn ln_additivity_check(pairs: &[QubitPairState]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    if pairs.len() > ADDITIVITY_MAX_PAIRS {
        return Err(Error::SizeGuard {
            dim: 1 << (2 * pairs.len()),
            limit: 1 << (2 * ADDITIVITY_MAX_PAIRS),
        });
    }
    let mut sum = 0.0;
    for pair in pairs {
        let rho = pair.density();
        let dense = DMatrix::from_fn(4, 4, |i, j| rho[(i, j)]);
        sum += log_negativity_dense(&dense, (2, 2))?;
    }
    let side = 1usize << pairs.len();
    let joint = log_negativity_dense(&qubit_register_density(pairs)?, (side, side))?;
    Ok((sum, joint))
}
