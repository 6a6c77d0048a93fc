use nalgebra::SymmetricEigen;

use super::{check_dims, hermitian_deviation, product, CMatrix, PureState, QMathError, Result};
use crate::{Tolerances, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Embeds `op` acting on factor `index` into the full space `dims`.
pub fn lift_to_subsystem(op: &CMatrix, dims: &[usize], index: usize) -> Result<CMatrix> {
    if index >= dims.len() {
        return Err(QMathError::SubsystemOutOfRange {
            index,
            count: dims.len(),
        });
    }
    if op.nrows() != dims[index] || op.ncols() != dims[index] {
        return Err(QMathError::DimensionMismatch {
            expected: dims[index],
            got: op.nrows(),
        });
    }
    let left = identity(product(&dims[..index]));
    let right = identity(product(&dims[index + 1..]));
    Ok(kron(&kron(&left, op), &right))
}

/// A general (not necessarily Hermitian) operator on a factored space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub dims: Vec<usize>,
    pub mat: CMatrix,
}

impl Operator {
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(QMathError::NotSquare(mat.nrows(), mat.ncols()));
        }
        check_dims(&dims, mat.nrows())?;
        Ok(Self { dims, mat })
    }

    pub fn tensor(&self, other: &Operator) -> Operator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Operator {
            dims,
            mat: kron(&self.mat, &other.mat),
        }
    }
}

/// Either operand kind accepted by [`tensor`].
#[derive(Debug, Clone, PartialEq)]
pub enum QObject {
    State(PureState),
    Operator(Operator),
}

/// Dynamic Kronecker composition; mixing a state with an operator is an error.
pub fn tensor(a: &QObject, b: &QObject) -> Result<QObject> {
    match (a, b) {
        (QObject::State(x), QObject::State(y)) => Ok(QObject::State(x.tensor(y))),
        (QObject::Operator(x), QObject::Operator(y)) => Ok(QObject::Operator(x.tensor(y))),
        _ => Err(QMathError::MixedTensorOperands),
    }
}

/// Hermitian, unit-trace, positive semi-definite matrix with its factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    dims: Vec<usize>,
    mat: CMatrix,
}

impl DensityOp {
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        Self::with_tolerances(dims, mat, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(dims: Vec<usize>, mat: CMatrix, tol: &Tolerances) -> Result<Self> {
        if !mat.is_square() {
            return Err(QMathError::NotSquare(mat.nrows(), mat.ncols()));
        }
        check_dims(&dims, mat.nrows())?;
        let dev = hermitian_deviation(&mat);
        if dev > tol.normalization {
            return Err(QMathError::NotHermitian(dev));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol.normalization || tr.im.abs() > tol.normalization {
            return Err(QMathError::BadTrace(tr.re));
        }
        let min_eig = hermitian_part(&mat)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol.psd {
            return Err(QMathError::NegativeEigenvalue(min_eig));
        }
        Ok(Self { dims, mat })
    }

    /// `I/d` on the given factorisation.
    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        let d = product(&dims);
        check_dims(&dims, d)?;
        Ok(Self {
            dims,
            mat: identity(d).unscale(d as f64),
        })
    }

    pub fn from_pure(state: &PureState) -> Result<Self> {
        state.density()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn tensor(&self, other: &DensityOp) -> DensityOp {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityOp {
            dims,
            mat: kron(&self.mat, &other.mat),
        }
    }

    pub fn as_operator(&self) -> Operator {
        Operator {
            dims: self.dims.clone(),
            mat: self.mat.clone(),
        }
    }

    /// Reduced state on the factors listed in `keep` (order-insensitive).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOp> {
        if keep.is_empty() {
            return Err(QMathError::EmptyKeep);
        }
        let count = self.dims.len();
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if let Some(&bad) = kept.iter().find(|&&k| k >= count) {
            return Err(QMathError::SubsystemOutOfRange { index: bad, count });
        }
        let traced: Vec<usize> = (0..count).filter(|i| !kept.contains(i)).collect();

        // stride[i] = product of dims to the right of factor i
        let mut stride = vec![1usize; count];
        for i in (0..count.saturating_sub(1)).rev() {
            stride[i] = stride[i + 1] * self.dims[i + 1];
        }
        let offsets = |factors: &[usize]| -> Vec<usize> {
            let total: usize = factors.iter().map(|&f| self.dims[f]).product();
            (0..total)
                .map(|mut flat| {
                    let mut off = 0;
                    for &f in factors.iter().rev() {
                        let d = self.dims[f];
                        off += (flat % d) * stride[f];
                        flat /= d;
                    }
                    off
                })
                .collect()
        };
        let kept_off = offsets(&kept);
        let traced_off = offsets(&traced);

        let dk = kept_off.len();
        let mut out = CMatrix::zeros(dk, dk);
        for (i, &ri) in kept_off.iter().enumerate() {
            for (j, &cj) in kept_off.iter().enumerate() {
                out[(i, j)] = traced_off.iter().map(|&t| self.mat[(ri + t, cj + t)]).sum();
            }
        }
        Ok(DensityOp {
            dims: kept.iter().map(|&k| self.dims[k]).collect(),
            mat: out,
        })
    }

    /// Spectral ensemble `{(p_l, |l>)}` with zero-weight components dropped.
    pub fn eigen_ensemble(&self) -> Vec<(f64, PureState)> {
        let eig = SymmetricEigen::new(hermitian_part(&self.mat));
        let mut out: Vec<(f64, PureState)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 1e-13)
            .map(|(k, &p)| {
                let v = eig.eigenvectors.column(k).into_owned();
                let state =
                    PureState::normalize(self.dims.clone(), v).expect("eigenvector has unit norm");
                (p, state)
            })
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

/// One eigenspace of an observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: CMatrix,
}

/// Hermitian matrix together with its spectral decomposition.
///
/// Eigenvalues are sorted ascending and degenerate eigenvalues share one
/// projector, so a von Neumann coupling produces exactly one pointer branch
/// per distinct eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    mat: CMatrix,
    spectrum: Vec<Eigenspace>,
}

impl Observable {
    pub fn spectral(mat: CMatrix) -> Result<Self> {
        Self::spectral_with(mat, &Tolerances::DEFAULT)
    }

    pub fn spectral_with(mat: CMatrix, tol: &Tolerances) -> Result<Self> {
        if !mat.is_square() {
            return Err(QMathError::NotSquare(mat.nrows(), mat.ncols()));
        }
        let dev = hermitian_deviation(&mat);
        if dev > tol.algebraic {
            return Err(QMathError::NotHermitian(dev));
        }
        let eig = SymmetricEigen::new(hermitian_part(&mat));
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &k in &order {
            match groups.last_mut() {
                Some(g)
                    if (eig.eigenvalues[k] - eig.eigenvalues[*g.last().unwrap()]).abs()
                        <= tol.eigen_cluster =>
                {
                    g.push(k)
                }
                _ => groups.push(vec![k]),
            }
        }
        let n = mat.nrows();
        let spectrum = groups
            .into_iter()
            .map(|g| {
                let value = g.iter().map(|&k| eig.eigenvalues[k]).sum::<f64>() / g.len() as f64;
                let mut projector = CMatrix::zeros(n, n);
                for &k in &g {
                    let v = eig.eigenvectors.column(k);
                    projector += v * v.adjoint();
                }
                Eigenspace { value, projector }
            })
            .collect();
        Ok(Self { mat, spectrum })
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn spectrum(&self) -> &[Eigenspace] {
        &self.spectrum
    }

    /// `Σ a_n P_n`
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        self.spectrum.iter().fold(CMatrix::zeros(n, n), |acc, e| {
            acc + e.projector.map(|z| z * e.value)
        })
    }

    /// The same observable acting on factor `index` of `dims`, identity
    /// elsewhere. Projectors are lifted directly, not recomputed.
    pub fn lift(&self, dims: &[usize], index: usize) -> Result<Observable> {
        let mat = lift_to_subsystem(&self.mat, dims, index)?;
        let spectrum = self
            .spectrum
            .iter()
            .map(|e| {
                Ok(Eigenspace {
                    value: e.value,
                    projector: lift_to_subsystem(&e.projector, dims, index)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observable { mat, spectrum })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{max_abs_diff, random, CVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = PureState::zero().tensor(&PureState::one());
        let expect = [0.0, 1.0, 0.0, 0.0];
        for (a, e) in s.amps().iter().zip(expect) {
            assert_eq!(*a, r(e));
        }
        assert_eq!(s.dims(), &[2, 2]);
    }

    #[test]
    fn tensor_sigma_z_identity_diagonal() {
        let m = kron(&pauli_z(), &identity(2));
        let diag: Vec<f64> = (0..4).map(|i| m[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn tensor_plus_singlet_amplitude() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = PureState::new(
            vec![2, 2],
            CVector::from_vec(vec![r(0.0), r(h), r(-h), r(0.0)]),
        )
        .unwrap();
        let s = PureState::plus().tensor(&singlet);
        // |001> is index 1
        assert!((s.amps()[1] - r(0.5)).norm() < 1e-15);
        assert_eq!(s.dims(), &[2, 2, 2]);
    }

    #[test]
    fn mixed_operands_rejected() {
        let a = QObject::State(PureState::zero());
        let b = QObject::Operator(Operator::new(vec![2], pauli_z()).unwrap());
        assert_eq!(tensor(&a, &b), Err(QMathError::MixedTensorOperands));
        assert_eq!(tensor(&b, &a), Err(QMathError::MixedTensorOperands));
        assert!(matches!(tensor(&a, &a), Ok(QObject::State(_))));
        assert!(matches!(tensor(&b, &b), Ok(QObject::Operator(_))));
    }

    #[test]
    fn tensor_is_associative_exactly_on_dyadic_amplitudes() {
        // every partial product is exactly representable, so both groupings agree bit for bit
        let vals = [0.5, -0.25, 1.0, 0.0, -1.0, 0.125];
        let mut k = 0;
        let mut next = || {
            k += 1;
            C64::new(vals[k % vals.len()], vals[(3 * k + 1) % vals.len()])
        };
        for _ in 0..20 {
            let mut mk = |d: usize| {
                PureState::unnormalized(vec![d], CVector::from_fn(d, |_, _| next())).unwrap()
            };
            let (a, b, c) = (mk(2), mk(3), mk(2));
            let left = a.tensor(&b).tensor(&c);
            let right = a.tensor(&b.tensor(&c));
            assert_eq!(left.amps(), right.amps());
            assert_eq!(left.dims(), right.dims());
        }
    }

    #[test]
    fn tensor_is_associative_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = random::haar_qubit(&mut rng);
            let b = random::haar_qubit(&mut rng);
            let c = random::haar_qubit(&mut rng);
            let left = a.tensor(&b).tensor(&c);
            let right = a.tensor(&b.tensor(&c));
            assert!(crate::qmath::max_abs_diff_vec(left.amps(), right.amps()) < 1e-15);
        }
    }

    fn singlet_density() -> DensityOp {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(
            vec![2, 2],
            CVector::from_vec(vec![r(0.0), r(h), r(-h), r(0.0)]),
        )
        .unwrap()
        .density()
        .unwrap()
    }

    #[test]
    fn singlet_marginal_is_maximally_mixed() {
        let rho = singlet_density();
        let half = DensityOp::maximally_mixed(vec![2]).unwrap();
        for keep in [0usize, 1] {
            let red = rho.partial_trace(&[keep]).unwrap();
            assert!(max_abs_diff(red.mat(), half.mat()) < 1e-15);
        }
    }

    #[test]
    fn product_state_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random::density(&mut rng, 2);
            let b = random::density(&mut rng, 2);
            let ab = a.tensor(&b);
            assert!(max_abs_diff(ab.partial_trace(&[0]).unwrap().mat(), a.mat()) < 1e-12);
            assert!(max_abs_diff(ab.partial_trace(&[1]).unwrap().mat(), b.mat()) < 1e-12);
        }
    }

    #[test]
    fn three_factor_partial_trace_keeps_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random::density(&mut rng, 2);
        let b = random::density(&mut rng, 3);
        let d = random::density(&mut rng, 2);
        let abd = a.tensor(&b).tensor(&d);
        let mid = abd.partial_trace(&[1]).unwrap();
        assert_eq!(mid.dims(), &[3]);
        assert!(max_abs_diff(mid.mat(), b.mat()) < 1e-12);
        let outer = abd.partial_trace(&[2, 0]).unwrap();
        assert!(max_abs_diff(outer.mat(), a.tensor(&d).mat()) < 1e-12);
    }

    #[test]
    fn werner_marginals_are_maximally_mixed() {
        // Werner(p) = p|ψ-><ψ-| + (1-p) I/4, assembled by hand here.
        let half = DensityOp::maximally_mixed(vec![2]).unwrap();
        for p in [0.0, 0.3, 1.0] {
            let m =
                singlet_density().mat().map(|z| z * p) + identity(4).map(|z| z * ((1.0 - p) / 4.0));
            let w = DensityOp::new(vec![2, 2], m).unwrap();
            let red = w.partial_trace(&[0]).unwrap();
            assert!(max_abs_diff(red.mat(), half.mat()) < 1e-15, "p = {p}");
        }
    }

    #[test]
    fn partial_trace_errors() {
        let rho = singlet_density();
        assert_eq!(rho.partial_trace(&[]), Err(QMathError::EmptyKeep));
        assert!(matches!(
            rho.partial_trace(&[2]),
            Err(QMathError::SubsystemOutOfRange { index: 2, count: 2 })
        ));
    }

    #[test]
    fn spectral_pauli_z() {
        let obs = Observable::spectral(pauli_z()).unwrap();
        let s = obs.spectrum();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].value, -1.0);
        assert_eq!(s[1].value, 1.0);
        let p1 = PureState::one().outer();
        let p0 = PureState::zero().outer();
        assert!(max_abs_diff(&s[0].projector, &p1) < 1e-15);
        assert!(max_abs_diff(&s[1].projector, &p0) < 1e-15);
    }

    #[test]
    fn spectral_identity_is_one_eigenspace() {
        let obs = Observable::spectral(identity(2)).unwrap();
        assert_eq!(obs.spectrum().len(), 1);
        assert!((obs.spectrum()[0].value - 1.0).abs() < 1e-15);
        assert!(max_abs_diff(&obs.spectrum()[0].projector, &identity(2)) < 1e-15);
    }

    #[test]
    fn spectral_x_plus_z() {
        // characteristic polynomial λ² - 2 = 0
        let obs = Observable::spectral(pauli_x() + pauli_z()).unwrap();
        let vals: Vec<f64> = obs.spectrum().iter().map(|e| e.value).collect();
        assert!((vals[0] + 2f64.sqrt()).abs() < 1e-14);
        assert!((vals[1] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn spectral_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[r(0.), r(1.), r(0.), r(0.)]);
        assert!(matches!(
            Observable::spectral(m),
            Err(QMathError::NotHermitian(_))
        ));
    }

    #[test]
    fn spectral_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [2usize, 4] {
            for _ in 0..100 {
                let h = random::hermitian(&mut rng, dim);
                let obs = Observable::spectral(h.clone()).unwrap();
                assert!(max_abs_diff(&obs.reconstruct(), &h) < 1e-10);
                let mut total = CMatrix::zeros(dim, dim);
                for (i, e) in obs.spectrum().iter().enumerate() {
                    assert!(max_abs_diff(&(&e.projector * &e.projector), &e.projector) < 1e-10);
                    for f in &obs.spectrum()[i + 1..] {
                        assert!((&e.projector * &f.projector).norm() < 1e-10);
                    }
                    total += &e.projector;
                }
                assert!(max_abs_diff(&total, &identity(dim)) < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_observable_on_subsystem() {
        // σz ⊗ I has two 2-dimensional eigenspaces
        let obs = Observable::spectral(kron(&pauli_z(), &identity(2))).unwrap();
        assert_eq!(obs.spectrum().len(), 2);
        let lifted = Observable::spectral(pauli_z())
            .unwrap()
            .lift(&[2, 2], 0)
            .unwrap();
        assert!(max_abs_diff(lifted.mat(), obs.mat()) < 1e-15);
        for (a, b) in lifted.spectrum().iter().zip(obs.spectrum()) {
            assert!(max_abs_diff(&a.projector, &b.projector) < 1e-12);
        }
        assert!(Observable::spectral(pauli_z())
            .unwrap()
            .lift(&[2, 2], 2)
            .is_err());
    }

    #[test]
    fn density_validation() {
        let bad_trace = identity(2);
        assert!(matches!(
            DensityOp::new(vec![2], bad_trace),
            Err(QMathError::BadTrace(_))
        ));
        let negative = CMatrix::from_row_slice(2, 2, &[r(1.5), r(0.), r(0.), r(-0.5)]);
        assert!(matches!(
            DensityOp::new(vec![2], negative),
            Err(QMathError::NegativeEigenvalue(_))
        ));
        let non_herm = CMatrix::from_row_slice(2, 2, &[r(0.5), r(0.3), r(0.), r(0.5)]);
        assert!(matches!(
            DensityOp::new(vec![2], non_herm),
            Err(QMathError::NotHermitian(_))
        ));
        assert!(DensityOp::new(vec![3], identity(2).unscale(2.0)).is_err());
    }

    #[test]
    fn eigen_ensemble_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random::density(&mut rng, 4);
        let ens = rho.eigen_ensemble();
        let n = rho.dim();
        let sum = ens.iter().fold(CMatrix::zeros(n, n), |acc, (p, s)| {
            acc + s.outer().map(|z| z * *p)
        });
        assert!(max_abs_diff(&sum, rho.mat()) < 1e-12);
        let pure = PureState::plus().density().unwrap().eigen_ensemble();
        assert_eq!(pure.len(), 1);
    }
}
