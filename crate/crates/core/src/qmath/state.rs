use super::{check_dims, CMatrix, CVector, DensityOp, QMathError, Result};
use crate::{Tolerances, C64};

/// A state vector over a tensor-factored space.
///
/// Unnormalized vectors are allowed only as intermediate results (branch
/// states of a decomposition, projected components) and carry
/// `normalized == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amps: CVector,
    normalized: bool,
}

impl PureState {
    /// Builds a normalized state, rejecting vectors whose norm is off by
    /// more than the normalization tolerance.
    pub fn new(dims: Vec<usize>, amps: CVector) -> Result<Self> {
        check_dims(&dims, amps.len())?;
        let norm = amps.norm();
        if (norm - 1.0).abs() > Tolerances::DEFAULT.normalization {
            return Err(QMathError::NotNormalized(norm));
        }
        Ok(Self {
            dims,
            amps,
            normalized: true,
        })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalize(dims: Vec<usize>, amps: CVector) -> Result<Self> {
        check_dims(&dims, amps.len())?;
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QMathError::NotNormalized(norm));
        }
        Ok(Self {
            dims,
            amps: amps.unscale(norm),
            normalized: true,
        })
    }

    /// An intermediate vector with no norm constraint.
    pub fn unnormalized(dims: Vec<usize>, amps: CVector) -> Result<Self> {
        check_dims(&dims, amps.len())?;
        Ok(Self {
            dims,
            amps,
            normalized: false,
        })
    }

    /// `alpha|0> + beta|1>`, normalized on construction.
    pub fn qubit(alpha: C64, beta: C64) -> Result<Self> {
        Self::normalize(vec![2], CVector::from_vec(vec![alpha, beta]))
    }

    /// Computational basis state `|index>` on the given factorisation.
    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let len = dims.iter().product();
        check_dims(&dims, len)?;
        if index >= len {
            return Err(QMathError::DimensionMismatch {
                expected: len,
                got: index,
            });
        }
        let mut amps = CVector::zeros(len);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self {
            dims,
            amps,
            normalized: true,
        })
    }

    pub fn zero() -> Self {
        Self::basis(vec![2], 0).expect("qubit basis")
    }

    pub fn one() -> Self {
        Self::basis(vec![2], 1).expect("qubit basis")
    }

    /// `(|0> + |1>)/sqrt(2)`
    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(h, 0.0)).expect("plus state")
    }

    /// `(|0> - |1>)/sqrt(2)`
    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(-h, 0.0)).expect("minus state")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amps(self) -> CVector {
        self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(QMathError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Kronecker product, `self` on the left.
    pub fn tensor(&self, other: &PureState) -> PureState {
        let amps = self.amps.kronecker(&other.amps);
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        PureState {
            dims,
            amps,
            normalized: self.normalized && other.normalized,
        }
    }

    /// `op |self>`; the result is flagged unnormalized unless it stays unit-norm.
    pub fn apply(&self, op: &CMatrix) -> Result<PureState> {
        if op.ncols() != self.dim() || op.nrows() != self.dim() {
            return Err(QMathError::DimensionMismatch {
                expected: self.dim(),
                got: op.ncols(),
            });
        }
        let amps = op * &self.amps;
        let normalized =
            self.normalized && (amps.norm() - 1.0).abs() <= Tolerances::DEFAULT.normalization;
        Ok(PureState {
            dims: self.dims.clone(),
            amps,
            normalized,
        })
    }

    pub fn scale(&self, factor: C64) -> PureState {
        PureState {
            dims: self.dims.clone(),
            amps: self.amps.map(|z| z * factor),
            normalized: self.normalized && (factor.norm() - 1.0).abs() <= 1e-15,
        }
    }

    /// `|self><self|` as a matrix (not validated as a density operator).
    pub fn outer(&self) -> CMatrix {
        &self.amps * self.amps.adjoint()
    }

    /// `|self><self|` as a density operator; requires a normalized state.
    pub fn density(&self) -> Result<DensityOp> {
        if !self.normalized {
            return Err(QMathError::NotNormalized(self.norm()));
        }
        DensityOp::new(self.dims.clone(), self.outer())
    }

    /// Contracts `bra` against the factors listed in `factors` (in the bra's
    /// own factor order), leaving an unnormalized state on the remaining factors.
    pub fn partial_inner(&self, bra: &PureState, factors: &[usize]) -> Result<PureState> {
        let count = self.dims.len();
        for &f in factors {
            if f >= count {
                return Err(QMathError::SubsystemOutOfRange { index: f, count });
            }
        }
        let bra_dims: Vec<usize> = factors.iter().map(|&f| self.dims[f]).collect();
        if bra.dims != bra_dims {
            return Err(QMathError::DimensionMismatch {
                expected: bra_dims.iter().product(),
                got: bra.dim(),
            });
        }
        let rest: Vec<usize> = (0..count).filter(|i| !factors.contains(i)).collect();
        if rest.is_empty() {
            return Err(QMathError::EmptyKeep);
        }
        let mut stride = vec![1usize; count];
        for i in (0..count - 1).rev() {
            stride[i] = stride[i + 1] * self.dims[i + 1];
        }
        let offsets = |fs: &[usize]| -> Vec<usize> {
            let total: usize = fs.iter().map(|&f| self.dims[f]).product();
            (0..total)
                .map(|mut flat| {
                    let mut off = 0;
                    for &f in fs.iter().rev() {
                        let d = self.dims[f];
                        off += (flat % d) * stride[f];
                        flat /= d;
                    }
                    off
                })
                .collect()
        };
        let bra_off = offsets(factors);
        let rest_off = offsets(&rest);
        let amps = CVector::from_iterator(
            rest_off.len(),
            rest_off.iter().map(|&r| {
                bra_off
                    .iter()
                    .enumerate()
                    .map(|(k, &b)| bra.amps[k].conj() * self.amps[r + b])
                    .sum::<C64>()
            }),
        );
        Ok(PureState {
            dims: rest.iter().map(|&i| self.dims[i]).collect(),
            amps,
            normalized: false,
        })
    }
}
