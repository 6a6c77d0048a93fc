//! Shared entangled resources and Bell-type bases.
//!
//! All phase conventions are fixed exactly:
//!
//! ```text
//! B1 = φ+ = (|00> + |11>)/√2      U1 = -σz σx
//! B2 = φ- = (|00> - |11>)/√2      U2 =  σx
//! B3 = ψ+ = (|01> + |10>)/√2      U3 = -σz
//! B4 = ψ- = (|01> - |10>)/√2      U4 = -I
//! ```
//!
//! so that `|a>_1 ⊗ |ψ->_23 = ½ Σ_i |B_i>_12 ⊗ U_i|a>_3`. For the
//! non-maximal resource `|φn+> = N(|00> + n|11>)`, `N = 1/√(1+|n|²)`, the
//! generalized basis is
//!
//! ```text
//! B̃1 = N(|00> + n|11>)    B̃2 = N(n*|00> - |11>)
//! B̃3 = N(|01> + n*|10>)   B̃4 = N(n|01> - |10>)
//! ```
//!
//! and `|a>_1 ⊗ |φn+>_23 = N² Σ_i |B̃_i>_12 ⊗ |a^(i)>_3` with unnormalized
//! branch states `|a^(i)>`.

use std::fmt;

use thiserror::Error;

use crate::qmath::{
    identity, pauli_x, pauli_z, CMatrix, CVector, DensityOp, PureState, QMathError,
};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("degenerate resource: n = 0 gives a product state")]
    DegenerateResource,

    #[error("Werner parameter p = {0} outside [0, 1]")]
    WernerOutOfRange(f64),

    #[error("custom resource must be a two-qubit density operator")]
    NotTwoQubit,

    #[error("expected a single-qubit state")]
    NotQubit,

    #[error("operation needs a pure resource (singlet or non-maximal)")]
    NotPure,

    #[error("Bell outcome {0} outside 1..=4")]
    BadOutcome(u8),

    #[error(transparent)]
    QMath(#[from] QMathError),
}

pub type Result<T> = std::result::Result<T, ResourceError>;

/// One of the four Bell-type measurement outcomes, numbered 1 to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BellOutcome(u8);

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome(1),
        BellOutcome(2),
        BellOutcome(3),
        BellOutcome(4),
    ];

    pub fn new(label: u8) -> Result<Self> {
        if (1..=4).contains(&label) {
            Ok(Self(label))
        } else {
            Err(ResourceError::BadOutcome(label))
        }
    }

    /// Label 1..=4.
    pub fn label(self) -> u8 {
        self.0
    }

    /// Zero-based array index.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(index: usize) -> Result<Self> {
        u8::try_from(index + 1)
            .map_err(|_| ResourceError::BadOutcome(u8::MAX))
            .and_then(Self::new)
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn two_qubit(amps: [C64; 4]) -> PureState {
    PureState::normalize(vec![2, 2], CVector::from_vec(amps.to_vec())).expect("nonzero amplitudes")
}

/// `(|01> - |10>)/√2`
pub fn singlet() -> PureState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PureState::new(
        vec![2, 2],
        CVector::from_vec(vec![r(0.), r(h), r(-h), r(0.)]),
    )
    .expect("singlet is normalized")
}

/// `N(|00> + n|11>)`
pub fn non_maximal(n: C64) -> Result<PureState> {
    if n.norm() == 0.0 {
        return Err(ResourceError::DegenerateResource);
    }
    Ok(two_qubit([r(1.), r(0.), r(0.), n]))
}

/// `p|ψ-><ψ-| + (1-p) I/4`
pub fn werner(p: f64) -> Result<DensityOp> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ResourceError::WernerOutOfRange(p));
    }
    let m = singlet().outer().map(|z| z * p) + identity(4).map(|z| z * ((1.0 - p) / 4.0));
    Ok(DensityOp::new(vec![2, 2], m)?)
}

/// The kinds of shared resource the protocol can run on.
#[derive(Debug, Clone, PartialEq)]
pub enum ResourceKind {
    Singlet,
    NonMax(C64),
    Werner(f64),
    Custom(DensityOp),
}

/// A constructed resource: a state vector for pure kinds, a density operator otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum ResourceState {
    Pure(PureState),
    Mixed(DensityOp),
}

impl ResourceKind {
    pub fn make(&self) -> Result<ResourceState> {
        match self {
            ResourceKind::Singlet => Ok(ResourceState::Pure(singlet())),
            ResourceKind::NonMax(n) => Ok(ResourceState::Pure(non_maximal(*n)?)),
            ResourceKind::Werner(p) => Ok(ResourceState::Mixed(werner(*p)?)),
            ResourceKind::Custom(xi) => {
                if xi.dims() != [2, 2] {
                    return Err(ResourceError::NotTwoQubit);
                }
                Ok(ResourceState::Mixed(xi.clone()))
            }
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, ResourceKind::Singlet | ResourceKind::NonMax(_))
    }

    /// The resource as a density operator, whatever its kind.
    pub fn density(&self) -> Result<DensityOp> {
        match self.make()? {
            ResourceState::Pure(s) => Ok(s.density()?),
            ResourceState::Mixed(d) => Ok(d),
        }
    }

    /// The Bell-type basis Alice measures in when this resource is shared.
    pub fn measurement_basis(&self) -> Result<[PureState; 4]> {
        match self {
            ResourceKind::NonMax(n) => Ok(GeneralizedBellBasis::new(*n)?.states),
            _ => Ok(BellBasis::standard().states),
        }
    }

    /// Rotation Bob applies before projecting on his target state: σz for the
    /// non-maximal resource, identity otherwise.
    pub fn bob_rotation(&self) -> CMatrix {
        match self {
            ResourceKind::NonMax(_) => pauli_z(),
            _ => identity(2),
        }
    }

    /// The outcome Alice accepts by default: ψ- for maximally entangled and
    /// mixed resources, φn- for the non-maximal one.
    pub fn default_accepted_outcome(&self) -> BellOutcome {
        match self {
            ResourceKind::NonMax(_) => BellOutcome(2),
            _ => BellOutcome(4),
        }
    }
}

/// Standard Bell basis with the teleportation unitaries `U_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellBasis {
    pub states: [PureState; 4],
    pub unitaries: [CMatrix; 4],
}

impl BellBasis {
    pub fn standard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let states = [
            PureState::new(
                vec![2, 2],
                CVector::from_vec(vec![r(h), r(0.), r(0.), r(h)]),
            ),
            PureState::new(
                vec![2, 2],
                CVector::from_vec(vec![r(h), r(0.), r(0.), r(-h)]),
            ),
            PureState::new(
                vec![2, 2],
                CVector::from_vec(vec![r(0.), r(h), r(h), r(0.)]),
            ),
            PureState::new(
                vec![2, 2],
                CVector::from_vec(vec![r(0.), r(h), r(-h), r(0.)]),
            ),
        ]
        .map(|s| s.expect("Bell states are normalized"));
        let neg = |m: CMatrix| m.map(|z| -z);
        let unitaries = [
            neg(pauli_z() * pauli_x()),
            pauli_x(),
            neg(pauli_z()),
            neg(identity(2)),
        ];
        Self { states, unitaries }
    }

    /// Standard states with caller-supplied unitaries (used to inject faults
    /// into verification runs).
    pub fn with_unitaries(unitaries: [CMatrix; 4]) -> Self {
        Self {
            states: Self::standard().states,
            unitaries,
        }
    }

    pub fn state(&self, outcome: BellOutcome) -> &PureState {
        &self.states[outcome.index()]
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        gram_error(&self.states)
    }

    /// Largest deviation of `U_i† U_i` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        self.unitaries
            .iter()
            .map(|u| crate::qmath::max_abs_diff(&(u.adjoint() * u), &identity(2)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn gram_error(states: &[PureState]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            let ip = a.inner(b).expect("same dimension");
            worst = worst.max((ip - r(expected)).norm());
        }
    }
    worst
}

/// Orthonormal two-qubit basis adapted to `|φn+>`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedBellBasis {
    pub n: C64,
    /// `N = 1/√(1+|n|²)`
    pub norm: f64,
    pub states: [PureState; 4],
}

impl GeneralizedBellBasis {
    pub fn new(n: C64) -> Result<Self> {
        if n.norm() == 0.0 {
            return Err(ResourceError::DegenerateResource);
        }
        let big_n = 1.0 / (1.0 + n.norm_sqr()).sqrt();
        let nc = n.conj();
        let z = r(0.);
        let mk = two_qubit;
        let states = [
            mk([r(1.), z, z, n]),
            mk([nc, z, z, r(-1.)]),
            mk([z, r(1.), nc, z]),
            mk([z, n, r(-1.), z]),
        ];
        Ok(Self {
            n,
            norm: big_n,
            states,
        })
    }

    pub fn state(&self, outcome: BellOutcome) -> &PureState {
        &self.states[outcome.index()]
    }

    pub fn orthonormality_error(&self) -> f64 {
        gram_error(&self.states)
    }

    /// Unnormalized branch states `|a^(i)>` for `a = c|0> + d|1>`.
    pub fn branch_states(&self, a: &PureState) -> Result<[PureState; 4]> {
        let (c, d) = qubit_amps(a)?;
        let n = self.n;
        let n2 = r(self.n.norm_sqr());
        let mk = |x: C64, y: C64| {
            PureState::unnormalized(vec![2], CVector::from_vec(vec![x, y])).expect("qubit")
        };
        Ok([
            mk(c, d * n2),
            mk(n * c, -(n * d)),
            mk(n * d, n * c),
            mk(-d, c * n2),
        ])
    }
}

fn qubit_amps(a: &PureState) -> Result<(C64, C64)> {
    if a.dims() != [2] {
        return Err(ResourceError::NotQubit);
    }
    Ok((a.amps()[0], a.amps()[1]))
}

/// One term `basis_state_12 ⊗ branch_state_3` of a resource re-expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionBranch {
    pub basis_state: PureState,
    pub branch_state: PureState,
}

/// `weight · Σ_i basis_i ⊗ branch_i`
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDecomposition {
    pub weight: f64,
    pub branches: Vec<DecompositionBranch>,
}

impl ResourceDecomposition {
    /// The three-qubit vector the decomposition stands for.
    pub fn reconstruct(&self) -> CVector {
        self.branches.iter().fold(CVector::zeros(8), |acc, b| {
            acc + b.basis_state.tensor(&b.branch_state).into_amps()
        }) * r(self.weight)
    }
}

/// Re-expands `|a>_1 ⊗ resource_23` in the resource's Bell-type basis on
/// particles 1–2 with branch states on particle 3.
pub fn resource_decomposition(
    a: &PureState,
    resource: &ResourceKind,
) -> Result<ResourceDecomposition> {
    match resource {
        ResourceKind::Singlet => decompose_with_bell_basis(a, &BellBasis::standard()),
        ResourceKind::NonMax(n) => {
            let basis = GeneralizedBellBasis::new(*n)?;
            let branch = basis.branch_states(a)?;
            let branches = basis
                .states
                .iter()
                .cloned()
                .zip(branch)
                .map(|(basis_state, branch_state)| DecompositionBranch {
                    basis_state,
                    branch_state,
                })
                .collect();
            Ok(ResourceDecomposition {
                weight: basis.norm * basis.norm,
                branches,
            })
        }
        ResourceKind::Werner(_) | ResourceKind::Custom(_) => Err(ResourceError::NotPure),
    }
}

/// Singlet re-expansion `½ Σ_i B_i ⊗ U_i|a>` using the unitaries of `basis`.
pub fn decompose_with_bell_basis(
    a: &PureState,
    basis: &BellBasis,
) -> Result<ResourceDecomposition> {
    qubit_amps(a)?;
    let branches = basis
        .states
        .iter()
        .zip(&basis.unitaries)
        .map(|(b, u)| {
            Ok(DecompositionBranch {
                basis_state: b.clone(),
                branch_state: a.apply(u)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResourceDecomposition {
        weight: 0.5,
        branches,
    })
}

/// Largest amplitude error of a decomposition against `|a> ⊗ resource`.
pub fn reconstruction_error(
    a: &PureState,
    resource: &PureState,
    decomposition: &ResourceDecomposition,
) -> f64 {
    let target = a.tensor(resource).into_amps();
    crate::qmath::max_abs_diff_vec(&decomposition.reconstruct(), &target)
}
