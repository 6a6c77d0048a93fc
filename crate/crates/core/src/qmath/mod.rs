//! Complex linear-algebra substrate.
//!
//! States and operators carry their tensor factorisation (`dims`) so that
//! partial traces and subsystem embeddings never rely on implicit ordering.
//! Factor 0 is always the leftmost Kronecker factor.

mod operator;
pub mod random;
mod state;

pub use operator::{
    identity, kron, lift_to_subsystem, pauli_x, pauli_y, pauli_z, tensor, DensityOp, Eigenspace,
    Observable, Operator, QObject,
};
pub use state::PureState;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QMathError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subsystem dimensions must be positive")]
    ZeroDimension,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    BadTrace(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NegativeEigenvalue(f64),

    #[error("cannot tensor a state with an operator")]
    MixedTensorOperands,

    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeep,

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, QMathError>;

pub(crate) fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

pub(crate) fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(QMathError::ZeroDimension);
    }
    let expected = product(dims);
    if expected != len {
        return Err(QMathError::DimensionMismatch { expected, got: len });
    }
    Ok(())
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entrywise modulus of `a - b` for vectors.
pub fn max_abs_diff_vec(a: &CVector, b: &CVector) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_abs_diff_vec");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}
