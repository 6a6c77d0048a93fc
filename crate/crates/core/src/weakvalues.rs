//! Closed-form weak values and transition amplitudes.
//!
//! Every weak value is returned with its numerator and denominator so the
//! characteristic prefactors (−½ for the singlet, `nN²` for the non-maximal
//! resource, ¼ for the trace formulas) can be checked on the pieces.

use thiserror::Error;

use crate::qmath::{
    identity, pauli_x, pauli_z, trace_of_product, CMatrix, DensityOp, Observable, PureState,
    QMathError,
};
use crate::resources::{BellBasis, BellOutcome, ResourceError, ResourceKind, ResourceState};
use crate::{Tolerances, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakValueError {
    #[error("orthogonal postselection: |overlap| = {overlap:e} is below the guard")]
    OrthogonalPostselection { overlap: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transition probability has imaginary part {0:e}")]
    NotReal(f64),

    #[error(transparent)]
    Resource(#[from] ResourceError),

    #[error(transparent)]
    QMath(#[from] QMathError),
}

pub type Result<T> = std::result::Result<T, WeakValueError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValueResult {
    pub value: C64,
    pub numerator: C64,
    pub denominator: C64,
}

impl WeakValueResult {
    fn ratio(numerator: C64, denominator: C64, eps: f64) -> Result<Self> {
        let overlap = denominator.norm();
        if !(overlap > eps) {
            return Err(WeakValueError::OrthogonalPostselection { overlap });
        }
        Ok(Self {
            value: numerator / denominator,
            numerator,
            denominator,
        })
    }
}

/// Transition amplitude `<Ψfin|A|Ψin>` together with `<Ψfin|Ψin>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionAmplitude {
    pub amplitude: C64,
    pub overlap: C64,
}

fn same_dim(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(WeakValueError::Dimension(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Weak-value calculator with a configurable overlap guard.
#[derive(Debug, Clone, Copy, Default)]
pub struct Evaluator {
    pub tol: Tolerances,
}

impl Evaluator {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol }
    }

    pub fn pure(
        &self,
        a: &Observable,
        psi_i: &PureState,
        psi_f: &PureState,
    ) -> Result<WeakValueResult> {
        same_dim("observable vs preselection", a.dim(), psi_i.dim())?;
        same_dim("observable vs postselection", a.dim(), psi_f.dim())?;
        let a_psi = psi_i.apply(a.mat())?;
        WeakValueResult::ratio(psi_f.inner(&a_psi)?, psi_f.inner(psi_i)?, self.tol.overlap)
    }

    pub fn composite(
        &self,
        a_full: &Observable,
        psi_in: &PureState,
        psi_fin: &PureState,
    ) -> Result<WeakValueResult> {
        for s in [psi_in, psi_fin] {
            if s.dims() != [2, 2, 2] {
                return Err(WeakValueError::Dimension(format!(
                    "expected a three-qubit state, got dims {:?}",
                    s.dims()
                )));
            }
        }
        self.pure(a_full, psi_in, psi_fin)
    }

    pub fn mixed(
        &self,
        a: &Observable,
        rho_i: &DensityOp,
        rho_f: &DensityOp,
    ) -> Result<WeakValueResult> {
        same_dim("observable vs rho_i", a.dim(), rho_i.dim())?;
        same_dim("observable vs rho_f", a.dim(), rho_f.dim())?;
        let a_rho = a.mat() * rho_i.mat();
        WeakValueResult::ratio(
            trace_of_product(rho_f.mat(), &a_rho),
            trace_of_product(rho_f.mat(), rho_i.mat()),
            self.tol.overlap,
        )
    }

    pub fn trace_composite(
        &self,
        a_full: &Observable,
        chi_in: &DensityOp,
        chi_fin: &DensityOp,
    ) -> Result<WeakValueResult> {
        for d in [chi_in, chi_fin] {
            if d.dims() != [2, 2, 2] {
                return Err(WeakValueError::Dimension(format!(
                    "expected a three-qubit operator, got dims {:?}",
                    d.dims()
                )));
            }
        }
        self.mixed(a_full, chi_in, chi_fin)
    }

    pub fn general(
        &self,
        a: &Observable,
        rho_i: &DensityOp,
        rho_f: &DensityOp,
        xi: &DensityOp,
    ) -> Result<WeakValueResult> {
        check_qubit_inputs(a, rho_i, rho_f)?;
        if xi.dims() != [2, 2] {
            return Err(ResourceError::NotTwoQubit.into());
        }
        let bell = BellBasis::standard();
        let v = CorrectionSet::standard();
        // ξ_nm = <B_n|ξ|B_m>
        let xi_nm = |n: usize, m: usize| -> C64 {
            let xb = bell.states[m].apply(xi.mat()).expect("two-qubit");
            bell.states[n].inner(&xb).expect("two-qubit")
        };
        let a_rho = a.mat() * rho_i.mat();
        let mut num = r(0.0);
        let mut den = r(0.0);
        for m in 0..4 {
            for n in 0..4 {
                let w = xi_nm(n, m);
                let sandwich = &v.v[m] * rho_f.mat() * v.v[n].adjoint();
                num += trace_of_product(&sandwich, &a_rho) * w;
                den += trace_of_product(&sandwich, rho_i.mat()) * w;
            }
        }
        WeakValueResult::ratio(num, den, self.tol.overlap)
    }

    pub fn werner(
        &self,
        a: &Observable,
        rho_i: &DensityOp,
        rho_f: &DensityOp,
        p: f64,
    ) -> Result<WeakValueResult> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ResourceError::WernerOutOfRange(p).into());
        }
        check_qubit_inputs(a, rho_i, rho_f)?;
        let a_rho = a.mat() * rho_i.mat();
        let ideal_num = trace_of_product(rho_f.mat(), &a_rho);
        let ideal_den = trace_of_product(rho_f.mat(), rho_i.mat());
        let mean = a_rho.trace();
        let mix = (1.0 - p) / 2.0;
        WeakValueResult::ratio(
            ideal_num * p + mean * mix,
            ideal_den * p + r(mix),
            self.tol.overlap,
        )
    }
}

fn check_qubit_inputs(a: &Observable, rho_i: &DensityOp, rho_f: &DensityOp) -> Result<()> {
    for (what, d) in [
        ("observable", a.dim()),
        ("rho_i", rho_i.dim()),
        ("rho_f", rho_f.dim()),
    ] {
        if d != 2 {
            return Err(WeakValueError::Dimension(format!(
                "{what} must act on one qubit, got dimension {d}"
            )));
        }
    }
    Ok(())
}

/// `<ψf|A|ψi> / <ψf|ψi>`
pub fn weak_value_pure(
    a: &Observable,
    psi_i: &PureState,
    psi_f: &PureState,
) -> Result<WeakValueResult> {
    Evaluator::default().pure(a, psi_i, psi_f)
}

/// `<Ψfin|A|Ψin> / <Ψfin|Ψin>` for three-qubit states.
pub fn weak_value_composite(
    a_full: &Observable,
    psi_in: &PureState,
    psi_fin: &PureState,
) -> Result<WeakValueResult> {
    Evaluator::default().composite(a_full, psi_in, psi_fin)
}

/// `Tr[ρf A ρi] / Tr[ρf ρi]`
pub fn weak_value_mixed(
    a: &Observable,
    rho_i: &DensityOp,
    rho_f: &DensityOp,
) -> Result<WeakValueResult> {
    Evaluator::default().mixed(a, rho_i, rho_f)
}

/// `Tr[χfin A χin] / Tr[χfin χin]` for three-qubit operators.
pub fn weak_value_trace_composite(
    a_full: &Observable,
    chi_in: &DensityOp,
    chi_fin: &DensityOp,
) -> Result<WeakValueResult> {
    Evaluator::default().trace_composite(a_full, chi_in, chi_fin)
}

/// Weak value with an arbitrary shared two-qubit state `ξ` and remote
/// postselection `|ψ-><ψ-|_12 ⊗ ρf_3`, expressed through the Bell-basis
/// matrix elements `ξ_nm` and the correction unitaries `V_m`.
pub fn weak_value_general(
    a: &Observable,
    rho_i: &DensityOp,
    rho_f: &DensityOp,
    xi: &DensityOp,
) -> Result<WeakValueResult> {
    Evaluator::default().general(a, rho_i, rho_f, xi)
}

/// Werner-resource weak value:
/// `(p Tr[ρf A ρi] + ((1-p)/2) Tr[A ρi]) / (p Tr[ρf ρi] + (1-p)/2)`.
pub fn weak_value_werner(
    a: &Observable,
    rho_i: &DensityOp,
    rho_f: &DensityOp,
    p: f64,
) -> Result<WeakValueResult> {
    Evaluator::default().werner(a, rho_i, rho_f, p)
}

/// `Q(A) = Σ_{m=1..3} Tr[V_m ρf V_m† A ρi]`. Pass the identity for `Q(I)`.
pub fn q_functional(a: &CMatrix, rho_i: &DensityOp, rho_f: &DensityOp) -> C64 {
    let v = CorrectionSet::standard();
    let a_rho = a * rho_i.mat();
    v.v[..3]
        .iter()
        .map(|vm| trace_of_product(&(vm * rho_f.mat() * vm.adjoint()), &a_rho))
        .sum()
}

/// Builds `|Ψin> = |ψi>_1 ⊗ resource_23` for a pure resource.
pub fn remote_preselection(psi_i: &PureState, resource: &ResourceKind) -> Result<PureState> {
    match resource.make()? {
        ResourceState::Pure(res) => Ok(psi_i.tensor(&res)),
        ResourceState::Mixed(_) => Err(ResourceError::NotPure.into()),
    }
}

/// Builds `|Ψfin> = |B_k>_12 ⊗ (R|ψf>)_3`, with `B_k` from the resource's
/// measurement basis and `R` Bob's rotation (σz for the non-maximal resource).
pub fn remote_postselection(
    psi_f: &PureState,
    resource: &ResourceKind,
    outcome: BellOutcome,
) -> Result<PureState> {
    let basis = resource.measurement_basis()?;
    let bob = psi_f.apply(&resource.bob_rotation())?;
    Ok(basis[outcome.index()].tensor(&bob))
}

/// `<Ψfin|A⊗I⊗I|Ψin>` and `<Ψfin|Ψin>` under the default acceptance
/// convention of a pure resource (ψ- with `ψf` for the singlet, φn- with
/// `σz ψf` for the non-maximal resource).
pub fn transition_amplitude(
    a: &Observable,
    psi_i: &PureState,
    psi_f: &PureState,
    resource: &ResourceKind,
) -> Result<TransitionAmplitude> {
    if a.dim() != 2 || psi_i.dims() != [2] || psi_f.dims() != [2] {
        return Err(WeakValueError::Dimension(
            "transition amplitude needs qubit inputs".into(),
        ));
    }
    let psi_in = remote_preselection(psi_i, resource)?;
    let psi_fin = remote_postselection(psi_f, resource, resource.default_accepted_outcome())?;
    let a_full = a.lift(&[2, 2, 2], 0)?;
    let a_psi = psi_in.apply(a_full.mat())?;
    Ok(TransitionAmplitude {
        amplitude: psi_fin.inner(&a_psi)?,
        overlap: psi_fin.inner(&psi_in)?,
    })
}

/// Transition probability `|<φ|ψ>|²` read out as the weak value of `|φ><φ|`
/// with pre- and postselection both in `|ψ>`.
pub fn transition_probability_weak(psi: &PureState, phi: &PureState) -> Result<f64> {
    let proj = Observable::spectral(phi.outer())?;
    let wv = weak_value_pure(&proj, psi, psi)?;
    if wv.value.im.abs() > 1e-12 {
        return Err(WeakValueError::NotReal(wv.value.im));
    }
    Ok(wv.value.re)
}

/// The correction unitaries `V_1..V_4` that move a postselection on
/// particle 3 to particle 1 through the Bell basis on 2–3:
///
/// `<B_m|_23 (|ψ->_12 ⊗ |y>_3) = −½ V_m|y>_1`,
///
/// equivalently `|ψ-><ψ-|_12 ⊗ ρ_3 = ¼ Σ_mn V_m ρ_1 V_n† ⊗ |B_m><B_n|_23`.
/// Frozen values: `V = (−σzσx, σx, −σz, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionSet {
    pub v: [CMatrix; 4],
}

impl CorrectionSet {
    pub fn standard() -> Self {
        let neg = |m: CMatrix| m.map(|z| -z);
        Self {
            v: [
                neg(pauli_z() * pauli_x()),
                pauli_x(),
                neg(pauli_z()),
                identity(2),
            ],
        }
    }

    /// `Σ_m V_m ρ V_m†`
    pub fn twirl(&self, rho: &CMatrix) -> CMatrix {
        self.v.iter().fold(CMatrix::zeros(2, 2), |acc, vm| {
            acc + vm * rho * vm.adjoint()
        })
    }
}

/// See [`CorrectionSet`].
pub fn correction_unitaries() -> CorrectionSet {
    CorrectionSet::standard()
}

/// Weak values obtained when the shared state is the Bell projector
/// `|B_k><B_k|` for each `k`, next to the ideal weak value with Bob's state
/// rotated to `V_k ρf V_k†`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellResourceCase {
    pub outcome: BellOutcome,
    pub general: WeakValueResult,
    pub rotated_ideal: WeakValueResult,
    pub unrotated_ideal: WeakValueResult,
}

pub fn bell_resource_survey(
    a: &Observable,
    rho_i: &DensityOp,
    rho_f: &DensityOp,
) -> Result<Vec<BellResourceCase>> {
    let bell = BellBasis::standard();
    let v = CorrectionSet::standard();
    let unrotated_ideal = weak_value_mixed(a, rho_i, rho_f)?;
    BellOutcome::ALL
        .iter()
        .map(|&k| {
            let xi = bell.state(k).density()?;
            let vk = &v.v[k.index()];
            let rotated = DensityOp::new(vec![2], vk * rho_f.mat() * vk.adjoint())?;
            Ok(BellResourceCase {
                outcome: k,
                general: weak_value_general(a, rho_i, rho_f, &xi)?,
                rotated_ideal: weak_value_mixed(a, rho_i, &rotated)?,
                unrotated_ideal,
            })
        })
        .collect()
}
