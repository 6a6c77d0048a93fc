//! Identity and property checks behind `wvlab verify`.

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wvlab_core::pointer::{
    estimate_weak_value, BranchedPointer, GaussianPointer, Grid, PointerBranch, WeakMeasurement,
};
use wvlab_core::protocol::{sample_shots, Scenario, Selection};
use wvlab_core::qmath::{
    identity, pauli_x, pauli_z, random, CMatrix, DensityOp, Observable, PureState,
};
use wvlab_core::resources::{
    decompose_with_bell_basis, non_maximal, reconstruction_error, resource_decomposition, singlet,
    werner, BellBasis, GeneralizedBellBasis, ResourceKind,
};
use wvlab_core::weakvalues::{
    correction_unitaries, remote_postselection, remote_preselection, transition_amplitude,
    transition_probability_weak, weak_value_composite, weak_value_general, weak_value_mixed,
    weak_value_pure, weak_value_trace_composite, weak_value_werner,
};
use wvlab_core::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Decompositions,
    Weakvalues,
    Pointer,
    Protocol,
    All,
}

/// Deliberate corruptions used to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Replaces the first teleportation unitary with σx.
    CorruptU,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &'static str, max_error: f64, tolerance: f64) -> Self {
        Self {
            name,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5EED_0000 + stream)
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn sz() -> Observable {
    Observable::spectral(pauli_z()).unwrap()
}

fn random_observable(rng: &mut ChaCha8Rng) -> Observable {
    Observable::spectral(random::hermitian(rng, 2)).unwrap()
}

fn bell_basis(faults: &[Fault]) -> BellBasis {
    let mut basis = BellBasis::standard();
    if faults.contains(&Fault::CorruptU) {
        let mut u = basis.unitaries.clone();
        u[0] = pauli_x();
        basis = BellBasis::with_unitaries(u);
    }
    basis
}

fn singlet_reconstruction(faults: &[Fault]) -> Check {
    let mut rng = rng(1);
    let basis = bell_basis(faults);
    let res = singlet();
    let worst = (0..200)
        .map(|_| {
            let a = random::haar_qubit(&mut rng);
            reconstruction_error(&a, &res, &decompose_with_bell_basis(&a, &basis).unwrap())
        })
        .fold(0.0, f64::max);
    Check::new("eq7-reconstruction", worst, 1e-12)
}

fn generalized_reconstruction() -> Check {
    let mut rng = rng(2);
    let worst = (0..200)
        .map(|_| {
            let a = random::haar_qubit(&mut rng);
            let n = random::complex_in_annulus(&mut rng, 0.1, 5.0);
            let dec = resource_decomposition(&a, &ResourceKind::NonMax(n)).unwrap();
            reconstruction_error(&a, &non_maximal(n).unwrap(), &dec)
        })
        .fold(0.0, f64::max);
    Check::new("generalized-reconstruction", worst, 1e-12)
}

fn unit_n_reduction() -> Check {
    let g = GeneralizedBellBasis::new(r(1.0)).unwrap();
    let b = BellBasis::standard();
    let worst = g
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| 1.0 - x.inner(y).unwrap().norm())
        .fold(0.0, f64::max);
    Check::new("generalized-unit-n", worst, 1e-12)
}

fn orthonormality() -> Check {
    let mut rng = rng(3);
    let mut worst = BellBasis::standard().orthonormality_error();
    for _ in 0..50 {
        let n = random::complex_in_annulus(&mut rng, 0.1, 5.0);
        worst = worst.max(GeneralizedBellBasis::new(n).unwrap().orthonormality_error());
    }
    Check::new("basis-orthonormality", worst, 1e-12)
}

fn amplitude_factors() -> Vec<Check> {
    let mut rng = rng(4);
    let (mut singlet_err, mut nonmax_err) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < 100 {
        let a = random_observable(&mut rng);
        let i = random::haar_qubit(&mut rng);
        let f = random::haar_qubit(&mut rng);
        let n = random::complex_in_annulus(&mut rng, 0.2, 3.0);
        let direct = f.inner(&i.apply(a.mat()).unwrap()).unwrap();
        if direct.norm() < 1e-3 {
            continue;
        }
        let s = transition_amplitude(&a, &i, &f, &ResourceKind::Singlet).unwrap();
        singlet_err = singlet_err.max((s.amplitude / direct - r(-0.5)).norm());
        let nm = transition_amplitude(&a, &i, &f, &ResourceKind::NonMax(n)).unwrap();
        let factor = n / (1.0 + n.norm_sqr());
        nonmax_err = nonmax_err.max((nm.amplitude / direct - factor).norm());
        done += 1;
    }
    vec![
        Check::new("amplitude-factor-singlet", singlet_err, 1e-12),
        Check::new("amplitude-factor-nonmax", nonmax_err, 1e-12),
    ]
}

fn remote_equals_local() -> Check {
    let mut rng = rng(5);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 200 {
        let a = random_observable(&mut rng);
        let i = random::haar_qubit(&mut rng);
        let f = random::haar_qubit(&mut rng);
        if f.inner(&i).unwrap().norm() < 0.05 {
            continue;
        }
        let local = weak_value_pure(&a, &i, &f).unwrap().value;
        let a_full = a.lift(&[2, 2, 2], 0).unwrap();
        let n = random::complex_in_annulus(&mut rng, 0.2, 3.0);
        for res in [ResourceKind::Singlet, ResourceKind::NonMax(n)] {
            let psi_in = remote_preselection(&i, &res).unwrap();
            let psi_fin = remote_postselection(&f, &res, res.default_accepted_outcome()).unwrap();
            let remote = weak_value_composite(&a_full, &psi_in, &psi_fin)
                .unwrap()
                .value;
            worst = worst.max((remote - local).norm());
        }
        done += 1;
    }
    Check::new("remote-equals-local", worst, 1e-10)
}

fn singlet_density() -> DensityOp {
    singlet().density().unwrap()
}

fn trace_law() -> Vec<Check> {
    let mut rng = rng(6);
    let (mut value_err, mut factor_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let a = random_observable(&mut rng);
        let ri = random::density(&mut rng, 2);
        let rf = random::density(&mut rng, 2);
        let chi_in = ri.tensor(&singlet_density());
        let chi_fin = singlet_density().tensor(&rf);
        let a_full = a.lift(&[2, 2, 2], 0).unwrap();
        let comp = weak_value_trace_composite(&a_full, &chi_in, &chi_fin).unwrap();
        let direct = weak_value_mixed(&a, &ri, &rf).unwrap();
        value_err = value_err.max((comp.value - direct.value).norm());
        factor_err = factor_err
            .max((comp.numerator - direct.numerator * 0.25).norm())
            .max((comp.denominator - direct.denominator * 0.25).norm());
    }
    vec![
        Check::new("trace-law", value_err, 1e-10),
        Check::new("trace-law-quarter-factor", factor_err, 1e-12),
    ]
}

fn noisy_resource() -> Check {
    let mut rng = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_observable(&mut rng);
        let ri = random::density(&mut rng, 2);
        let rf = random::density(&mut rng, 2);
        let xi = random::density_on(&mut rng, vec![2, 2]);
        let closed = weak_value_general(&a, &ri, &rf, &xi).unwrap().value;
        let brute = weak_value_trace_composite(
            &a.lift(&[2, 2, 2], 0).unwrap(),
            &ri.tensor(&xi),
            &singlet_density().tensor(&rf),
        )
        .unwrap()
        .value;
        worst = worst.max((closed - brute).norm());
    }
    Check::new("noisy-resource-brute-force", worst, 1e-10)
}

fn correction_twirl() -> Check {
    let mut rng = rng(8);
    let v = correction_unitaries();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rho: CMatrix = random::hermitian(&mut rng, 2);
        let expect = identity(2) * (rho.trace() * 2.0);
        worst = worst.max(wvlab_core::qmath::max_abs_diff(&v.twirl(&rho), &expect));
    }
    Check::new("correction-twirl", worst, 1e-12)
}

fn werner_law() -> Vec<Check> {
    let mut rng = rng(9);
    let (mut vs_general, mut ideal, mut plus_zero) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let a = random_observable(&mut rng);
        let ri = random::density(&mut rng, 2);
        let rf = random::density(&mut rng, 2);
        for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let closed = weak_value_werner(&a, &ri, &rf, p).unwrap().value;
            let general = weak_value_general(&a, &ri, &rf, &werner(p).unwrap())
                .unwrap()
                .value;
            vs_general = vs_general.max((closed - general).norm());
        }
        let one = weak_value_werner(&a, &ri, &rf, 1.0).unwrap().value;
        ideal = ideal.max((one - weak_value_mixed(&a, &ri, &rf).unwrap().value).norm());
    }
    let plus = PureState::plus().density().unwrap();
    let zero = PureState::zero().density().unwrap();
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let v = weak_value_werner(&sz(), &plus, &zero, p).unwrap().value;
        plus_zero = plus_zero.max((v - r(p)).norm());
    }
    vec![
        Check::new("werner-law", vs_general, 1e-10),
        Check::new("werner-ideal-limit", ideal, 1e-10),
        Check::new("werner-plus-zero", plus_zero, 1e-10),
    ]
}

fn transition_probability() -> Check {
    let mut rng = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let psi = random::haar_qubit(&mut rng);
        let phi = random::haar_qubit(&mut rng);
        let p = transition_probability_weak(&psi, &phi).unwrap();
        worst = worst.max((p - phi.inner(&psi).unwrap().norm_sqr()).abs());
    }
    Check::new("transition-probability", worst, 1e-12)
}

fn pointer_readout() -> Check {
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let a = random_observable(&mut rng);
        let i = random::haar_qubit(&mut rng);
        let f = random::haar_qubit(&mut rng);
        let Ok(wv) = weak_value_pure(&a, &i, &f) else {
            continue;
        };
        if wv.value.norm() > 5.0 {
            continue;
        }
        let m = WeakMeasurement {
            pre: i,
            observable: a,
            subsystem: 0,
            post: f,
            pointer: GaussianPointer::new(1.0).unwrap(),
        };
        let est = estimate_weak_value(&m, &[0.1, 0.01, 0.001]).unwrap().value;
        worst = worst
            .max((est.re - wv.value.re).abs())
            .max((est.im - wv.value.im).abs());
        done += 1;
    }
    Check::new("pointer-readout", worst, 1e-6)
}

fn pointer_grid() -> Check {
    use rand::Rng;
    let mut rng = rng(12);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(1..=4);
        let branches = (0..k)
            .map(|_| PointerBranch {
                coef: C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                shift: rng.random_range(-2.0..2.0),
            })
            .collect();
        let bp = BranchedPointer {
            pointer: GaussianPointer::new(rng.random_range(0.5..1.5)).unwrap(),
            branches,
        };
        let a = bp.moments_closed().unwrap();
        let b = bp.moments_grid(&Grid::default()).unwrap();
        worst = worst
            .max((a.mean_q - b.mean_q).abs())
            .max((a.mean_p - b.mean_p).abs())
            .max((a.var_q - b.var_q).abs());
    }
    Check::new("pointer-grid-oracle", worst, 1e-8)
}

/// Largest deviation in standard errors; passes at five.
fn protocol_frequencies() -> Check {
    let s = Scenario::new(
        ResourceKind::Singlet,
        sz(),
        Selection::Pure(PureState::plus()),
        Selection::Pure(PureState::zero()),
        0.0,
        GaussianPointer::new(1.0).unwrap(),
    )
    .unwrap();
    let shots = 100_000u64;
    let stats = sample_shots(&s, shots, 1).unwrap().samples.unwrap();
    let n = shots as f64;
    let z = |count: u64, p: f64| (count as f64 / n - p).abs() / (p * (1.0 - p) / n).sqrt();
    let worst = stats
        .bell_counts
        .iter()
        .map(|&c| z(c, 0.25))
        .fold(z(stats.accepted, 0.125), f64::max);
    Check::new("protocol-outcome-statistics", worst, 5.0)
}

pub fn run(suite: Suite, faults: &[Fault]) -> Vec<Check> {
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Decompositions {
        checks.push(singlet_reconstruction(faults));
        checks.push(generalized_reconstruction());
        checks.push(unit_n_reduction());
        checks.push(orthonormality());
        checks.extend(amplitude_factors());
    }
    if all || suite == Suite::Weakvalues {
        checks.push(remote_equals_local());
        checks.extend(trace_law());
        checks.push(noisy_resource());
        checks.push(correction_twirl());
        checks.extend(werner_law());
        checks.push(transition_probability());
    }
    if all || suite == Suite::Pointer {
        checks.push(pointer_readout());
        checks.push(pointer_grid());
    }
    if all || suite == Suite::Protocol {
        checks.push(protocol_frequencies());
    }
    checks
}
