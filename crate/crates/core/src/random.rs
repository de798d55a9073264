//! Seeded random states for the verification suites.
//!
//! The generator is ChaCha8 seeded with `seed_from_u64`. Amplitudes have
//! independent standard normal real and imaginary parts and are then
//! normalized (Haar-distributed pure states); densities are `G G† / tr`
//! with `G` a 4×4 complex Ginibre matrix.

use nalgebra::{DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::states::{FockCutoff, QubitPairState, C64};

pub type StateRng = ChaCha8Rng;

pub fn rng(seed: u64) -> StateRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut StateRng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_pure_pair(rng: &mut StateRng) -> QubitPairState {
    let amps = [gaussian(rng), gaussian(rng), gaussian(rng), gaussian(rng)];
    QubitPairState::pure_normalized(amps).expect("gaussian vector is nonzero")
}

pub fn random_mixed_pair(rng: &mut StateRng) -> QubitPairState {
    let g = Matrix4::from_fn(|_, _| gaussian(rng));
    let rho = g * g.adjoint();
    let rho = rho / rho.trace();
    // restore exact Hermiticity lost to rounding in the product
    let rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    QubitPairState::mixed(rho).expect("Ginibre density is valid")
}

/// Normalized dense joint vector of length `4 * levels^2`.
pub fn random_joint_vector(rng: &mut StateRng, cutoff: FockCutoff) -> DVector<C64> {
    let n = cutoff.levels();
    let v = DVector::from_fn(4 * n * n, |_, _| gaussian(rng));
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}
