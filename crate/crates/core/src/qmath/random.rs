//! Random states and operators for property checks.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{CMatrix, CVector, DensityOp, PureState};
use crate::C64;

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-distributed pure state of dimension `dim` (one factor).
pub fn haar_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> PureState {
    let v = CVector::from_fn(dim, |_, _| gaussian_c64(rng));
    PureState::normalize(vec![dim], v).expect("gaussian vector is nonzero")
}

pub fn haar_qubit<R: Rng + ?Sized>(rng: &mut R) -> PureState {
    haar_state(rng, 2)
}

/// Random Hermitian matrix from the Gaussian unitary ensemble.
pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    (&g + g.adjoint()).unscale(2.0)
}

/// Full-rank density operator `G G† / Tr(G G†)` with Ginibre `G`.
pub fn density<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityOp {
    density_on(rng, vec![dim])
}

/// As [`density`], on an explicit factorisation.
pub fn density_on<R: Rng + ?Sized>(rng: &mut R, dims: Vec<usize>) -> DensityOp {
    let dim: usize = dims.iter().product();
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let m = m.unscale(tr);
    // exact Hermitian symmetrisation before validation
    let m = (&m + m.adjoint()).unscale(2.0);
    DensityOp::new(dims, m).expect("Ginibre construction is a valid density operator")
}

/// Complex number with modulus uniform in `[lo, hi]` and uniform phase.
pub fn complex_in_annulus<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> C64 {
    let r = rng.random_range(lo..=hi);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    C64::from_polar(r, phase)
}
