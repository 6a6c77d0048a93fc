//! Von Neumann pointer dynamics for a Gaussian apparatus.
//!
//! The apparatus starts in the real Gaussian
//! `G(q) = (2πσ²)^{-1/4} exp(−q²/(4σ²))`, so `Var(Q) = σ²`. The impulsive
//! coupling `exp(−i g A⊗P)` (ħ = 1) translates the pointer by `g·a_n` inside
//! the eigenspace of `a_n`, so after postselection the pointer is an exact
//! superposition `Σ_n κ_n G(q − g a_n)` and every moment has a closed form
//! built from the overlap kernel
//!
//! ```text
//! ∫ G(q−a) G(q−b) dq = exp(−(a−b)²/(8σ²))
//! ∫ q G(q−a) G(q−b) dq = ½(a+b) · O(a,b)
//! ∫ q² G(q−a) G(q−b) dq = (¼(a+b)² + σ²) · O(a,b)
//! ∫ G(q−a) (−i∂_q) G(q−b) dq = i(a−b)/(4σ²) · O(a,b)
//! ```
//!
//! Readout convention: `Re A_w ≈ <Q>/g`, `Im A_w ≈ 2σ²<P>/g`, extrapolated
//! to `g → 0` by a polynomial fit in `g²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};
use thiserror::Error;

use crate::qmath::{DensityOp, Observable, PureState, QMathError};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointerError {
    #[error("pointer width must be positive and finite (got {0})")]
    InvalidSigma(f64),

    #[error("impossible postselection: every branch amplitude vanishes")]
    ImpossiblePostselection,

    #[error("pointer state has zero norm")]
    ZeroNorm,

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("grid point count {0} is not a power of two")]
    GridPoints(usize),

    #[error("invalid coupling sweep: {0}")]
    BadSweep(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    QMath(#[from] QMathError),
}

pub type Result<T> = std::result::Result<T, PointerError>;

/// Initial apparatus state: centred real Gaussian with `Var(Q) = σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPointer {
    sigma: f64,
}

impl GaussianPointer {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(PointerError::InvalidSigma(sigma));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `G(q)`
    pub fn amplitude(&self, q: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * PI * s2).powf(-0.25) * (-q * q / (4.0 * s2)).exp()
    }

    /// `∫ G(q−a) G(q−b) dq`
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        (-d * d / (8.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerBranch {
    pub coef: C64,
    pub shift: f64,
}

/// `Σ_n coef_n G(q − shift_n)`, not necessarily normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchedPointer {
    pub pointer: GaussianPointer,
    pub branches: Vec<PointerBranch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerMoments {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
}

/// Evaluation grid for the discretized oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            min: -20.0,
            max: 20.0,
            points: 4096,
        }
    }
}

impl BranchedPointer {
    /// Pairwise sums `Σ_mn conj(c_m) c_n f(s_m, s_n) O(s_m, s_n)`.
    fn kernel_sum(&self, f: impl Fn(f64, f64) -> C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for bm in &self.branches {
            for bn in &self.branches {
                let o = self.pointer.overlap(bm.shift, bn.shift);
                acc += bm.coef.conj() * bn.coef * f(bm.shift, bn.shift) * o;
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.kernel_sum(|_, _| C64::new(1.0, 0.0)).re
    }

    pub fn wavefunction(&self, q: f64) -> C64 {
        self.branches
            .iter()
            .map(|b| b.coef * self.pointer.amplitude(q - b.shift))
            .sum()
    }

    /// Exact conditional moments of the normalized pointer state.
    pub fn moments_closed(&self) -> Result<PointerMoments> {
        let norm = self.norm_sqr();
        if !(norm > 0.0) {
            return Err(PointerError::ZeroNorm);
        }
        let s2 = self.pointer.sigma * self.pointer.sigma;
        let q1 = self.kernel_sum(|a, b| C64::new(0.5 * (a + b), 0.0)).re / norm;
        let q2 = self
            .kernel_sum(|a, b| C64::new(0.25 * (a + b) * (a + b) + s2, 0.0))
            .re
            / norm;
        let p1 = self
            .kernel_sum(|a, b| C64::new(0.0, (a - b) / (4.0 * s2)))
            .re
            / norm;
        Ok(PointerMoments {
            mean_q: q1,
            mean_p: p1,
            var_q: q2 - q1 * q1,
        })
    }

    /// Moments from the discretized wavefunction on a periodic grid, with
    /// `<P>` from the FFT spectrum. Independent of the closed forms.
    pub fn moments_grid(&self, grid: &Grid) -> Result<PointerMoments> {
        let n = grid.points;
        if n < 2 || !n.is_power_of_two() {
            return Err(PointerError::GridPoints(n));
        }
        if !(grid.max > grid.min) {
            return Err(PointerError::GridTooSmall("max must exceed min".into()));
        }
        let sigma = self.pointer.sigma;
        let (lo, hi) = self
            .branches
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
                (lo.min(b.shift), hi.max(b.shift))
            });
        if grid.min > lo - 8.0 * sigma || grid.max < hi + 8.0 * sigma {
            return Err(PointerError::GridTooSmall(format!(
                "[{}, {}] does not extend 8σ beyond shifts [{lo}, {hi}]",
                grid.min, grid.max
            )));
        }
        let length = grid.max - grid.min;
        let dx = length / n as f64;
        let psi: Vec<C64> = (0..n)
            .map(|j| self.wavefunction(grid.min + j as f64 * dx))
            .collect();
        let dens: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let norm: f64 = dens.iter().sum::<f64>() * dx;
        if !(norm > 0.0) {
            return Err(PointerError::ZeroNorm);
        }
        let edge = (n / 64).max(1);
        let edge_mass: f64 =
            (dens[..edge].iter().sum::<f64>() + dens[n - edge..].iter().sum::<f64>()) * dx;
        if edge_mass > 1e-10 * norm {
            return Err(PointerError::GridTooSmall(format!(
                "probability mass {edge_mass:e} near the grid boundary"
            )));
        }
        let mut q1 = 0.0;
        let mut q2 = 0.0;
        for (j, d) in dens.iter().enumerate() {
            let q = grid.min + j as f64 * dx;
            q1 += q * d;
            q2 += q * q * d;
        }
        q1 *= dx / norm;
        q2 *= dx / norm;

        let mut spectrum: Vec<FftComplex<f64>> =
            psi.iter().map(|z| FftComplex::new(z.re, z.im)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
        let dk = 2.0 * PI / length;
        let (mut pk, mut total) = (0.0, 0.0);
        for (m, z) in spectrum.iter().enumerate() {
            let k = match m {
                m if m < n / 2 => m as f64 * dk,
                m if m == n / 2 => 0.0,
                m => (m as f64 - n as f64) * dk,
            };
            let w = z.norm_sqr();
            pk += k * w;
            total += w;
        }
        Ok(PointerMoments {
            mean_q: q1,
            mean_p: pk / total,
            var_q: q2 - q1 * q1,
        })
    }
}

/// The part of the system state inside one eigenspace of the coupled observable.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBranch {
    pub eigenvalue: f64,
    pub state: PureState,
}

/// System ⊗ pointer right after `exp(−i g A⊗P)`: branch `n` carries the
/// projected system state and a pointer translated by `g·a_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub g: f64,
    pub pointer: GaussianPointer,
    pub branches: Vec<EigenBranch>,
}

impl CoupledState {
    pub fn shift(&self, branch: usize) -> f64 {
        self.g * self.branches[branch].eigenvalue
    }
}

/// Couples `observable` acting on factor `subsystem` of `state` to the pointer.
pub fn couple(
    state: &PureState,
    observable: &Observable,
    subsystem: usize,
    g: f64,
    pointer: GaussianPointer,
) -> Result<CoupledState> {
    let lifted = observable.lift(state.dims(), subsystem)?;
    let branches = lifted
        .spectrum()
        .iter()
        .map(|e| {
            Ok(EigenBranch {
                eigenvalue: e.value,
                state: state.apply(&e.projector)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledState {
        g,
        pointer,
        branches,
    })
}

/// Projects the system on `final_state`; returns the conditional (unnormalized)
/// pointer and the Born probability of the postselection.
pub fn postselect(
    coupled: &CoupledState,
    final_state: &PureState,
) -> Result<(BranchedPointer, f64)> {
    let branches = coupled
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            Ok(PointerBranch {
                coef: final_state.inner(&b.state)?,
                shift: coupled.shift(i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if branches.iter().all(|b| b.coef.norm() <= 1e-14) {
        return Err(PointerError::ImpossiblePostselection);
    }
    let bp = BranchedPointer {
        pointer: coupled.pointer,
        branches,
    };
    let prob = bp.norm_sqr();
    Ok((bp, prob))
}

/// One coupling strength of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub g: f64,
    pub moments: PointerMoments,
    pub success_prob: f64,
    pub re_est: f64,
    pub im_est: f64,
}

impl SweepPoint {
    fn new(g: f64, sigma: f64, moments: PointerMoments, success_prob: f64) -> Self {
        Self {
            g,
            moments,
            success_prob,
            re_est: moments.mean_q / g,
            im_est: 2.0 * sigma * sigma * moments.mean_p / g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueEstimate {
    pub value: C64,
    pub points: Vec<SweepPoint>,
}

/// Pure pre- and postselection around a coupling on one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakMeasurement {
    pub pre: PureState,
    pub observable: Observable,
    pub subsystem: usize,
    pub post: PureState,
    pub pointer: GaussianPointer,
}

/// Spectral ensemble `{(w_l, |l>)}` of a density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub components: Vec<(f64, PureState)>,
}

impl Ensemble {
    pub fn pure(state: PureState) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    pub fn from_density(rho: &DensityOp) -> Self {
        Self {
            components: rho.eigen_ensemble(),
        }
    }
}

/// Mixed pre- and postselection, each given as an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedWeakMeasurement {
    pub pre: Ensemble,
    pub observable: Observable,
    pub subsystem: usize,
    pub post: Ensemble,
    pub pointer: GaussianPointer,
}

impl From<&WeakMeasurement> for MixedWeakMeasurement {
    fn from(m: &WeakMeasurement) -> Self {
        Self {
            pre: Ensemble::pure(m.pre.clone()),
            observable: m.observable.clone(),
            subsystem: m.subsystem,
            post: Ensemble::pure(m.post.clone()),
            pointer: m.pointer,
        }
    }
}

/// Accepts descending positive couplings, at least three, spanning two decades.
pub fn validate_sweep(g_list: &[f64]) -> Result<()> {
    if g_list.len() < 3 {
        return Err(PointerError::BadSweep(
            "need at least three couplings".into(),
        ));
    }
    if g_list.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(PointerError::BadSweep(
            "couplings must be positive and finite".into(),
        ));
    }
    if g_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PointerError::BadSweep(
            "couplings must be strictly descending".into(),
        ));
    }
    if g_list[0] / g_list[g_list.len() - 1] < 100.0 * (1.0 - 1e-12) {
        return Err(PointerError::BadSweep(
            "couplings must span at least two decades".into(),
        ));
    }
    Ok(())
}

/// Least-squares polynomial in `g²` (degree ≤ 2) evaluated at `g = 0`.
pub fn extrapolate_to_zero(gs: &[f64], ys: &[f64]) -> f64 {
    let scale = gs.iter().fold(0.0f64, |m, g| m.max(g * g));
    let degree = (gs.len() - 1).min(2);
    let design = DMatrix::from_fn(gs.len(), degree + 1, |i, k| {
        (gs[i] * gs[i] / scale).powi(k as i32)
    });
    let rhs = DVector::from_column_slice(ys);
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-15)
        .expect("SVD with both factors requested");
    coeffs[0]
}

/// Conditional moments of a probability-weighted mixture of pointer states.
/// Each entry is `(prior weight, conditional pointer)`; the pointer's own norm
/// is the postselection probability. Returns the moments and `Σ weight·Pr`.
pub fn mixture_moments(parts: &[(f64, BranchedPointer)]) -> Result<(PointerMoments, f64)> {
    mixture_moments_with(parts, BranchedPointer::moments_closed)
}

/// As [`mixture_moments`], with the per-component moments supplied by `moments`.
pub fn mixture_moments_with(
    parts: &[(f64, BranchedPointer)],
    moments: impl Fn(&BranchedPointer) -> Result<PointerMoments>,
) -> Result<(PointerMoments, f64)> {
    let mut total = 0.0;
    let (mut q1, mut q2, mut p1) = (0.0, 0.0, 0.0);
    for (w, bp) in parts {
        let pr = bp.norm_sqr();
        if !(pr > 0.0) || *w == 0.0 {
            continue;
        }
        let m = moments(bp)?;
        let wt = w * pr;
        total += wt;
        q1 += wt * m.mean_q;
        q2 += wt * (m.var_q + m.mean_q * m.mean_q);
        p1 += wt * m.mean_p;
    }
    if !(total > 0.0) {
        return Err(PointerError::ImpossiblePostselection);
    }
    let (q1, q2, p1) = (q1 / total, q2 / total, p1 / total);
    Ok((
        PointerMoments {
            mean_q: q1,
            mean_p: p1,
            var_q: q2 - q1 * q1,
        },
        total,
    ))
}

fn finish(points: Vec<SweepPoint>) -> WeakValueEstimate {
    let gs: Vec<f64> = points.iter().map(|p| p.g).collect();
    let re: Vec<f64> = points.iter().map(|p| p.re_est).collect();
    let im: Vec<f64> = points.iter().map(|p| p.im_est).collect();
    WeakValueEstimate {
        value: C64::new(extrapolate_to_zero(&gs, &re), extrapolate_to_zero(&gs, &im)),
        points,
    }
}

/// Pointer readout of the weak value for pure pre/postselection.
pub fn estimate_weak_value(m: &WeakMeasurement, g_list: &[f64]) -> Result<WeakValueEstimate> {
    validate_sweep(g_list)?;
    let sigma = m.pointer.sigma();
    let points = g_list
        .par_iter()
        .map(|&g| {
            let coupled = couple(&m.pre, &m.observable, m.subsystem, g, m.pointer)?;
            let (bp, prob) = postselect(&coupled, &m.post)?;
            Ok(SweepPoint::new(g, sigma, bp.moments_closed()?, prob))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(points))
}

/// Conditional pointer at coupling `g` for ensemble pre/postselection:
/// one pure run per (preparation, postselection) pair, weighted by
/// `p_l q_k Pr_lk`.
pub fn mixed_sweep_point(m: &MixedWeakMeasurement, g: f64) -> Result<SweepPoint> {
    let mut parts = Vec::new();
    for (pl, pre) in &m.pre.components {
        let coupled = couple(pre, &m.observable, m.subsystem, g, m.pointer)?;
        for (qk, post) in &m.post.components {
            match postselect(&coupled, post) {
                Ok((bp, _)) => parts.push((pl * qk, bp)),
                Err(PointerError::ImpossiblePostselection) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let (moments, prob) = mixture_moments(&parts)?;
    Ok(SweepPoint::new(g, m.pointer.sigma(), moments, prob))
}

/// Pointer readout of `Tr[ρf A ρi]/Tr[ρf ρi]` from ensemble pre/postselection.
pub fn estimate_weak_value_mixed(
    m: &MixedWeakMeasurement,
    g_list: &[f64],
) -> Result<WeakValueEstimate> {
    validate_sweep(g_list)?;
    let points = g_list
        .par_iter()
        .map(|&g| mixed_sweep_point(m, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{identity, pauli_z, random};
    use crate::resources::singlet;
    use crate::weakvalues::weak_value_pure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn sz() -> Observable {
        Observable::spectral(pauli_z()).unwrap()
    }

    fn ptr(sigma: f64) -> GaussianPointer {
        GaussianPointer::new(sigma).unwrap()
    }

    /// Midpoint-rule quadrature over [-L, L].
    fn quad(f: impl Fn(f64) -> f64, l: f64, n: usize) -> f64 {
        let h = 2.0 * l / n as f64;
        (0..n).map(|i| f(-l + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn overlap_kernel_matches_quadrature() {
        for (sigma, a, b) in [
            (1.0, 0.0, 0.0),
            (1.0, 0.3, -0.7),
            (0.5, 1.2, 0.4),
            (2.0, -3.0, 2.5),
        ] {
            let p = ptr(sigma);
            let num = quad(|q| p.amplitude(q - a) * p.amplitude(q - b), 40.0, 200_000);
            assert!(
                (num - p.overlap(a, b)).abs() < 1e-10,
                "σ={sigma} a={a} b={b}"
            );
            assert_eq!(p.overlap(a, b), p.overlap(b, a));
        }
        assert_eq!(ptr(1.3).overlap(0.4, 0.4), 1.0);
        let p = ptr(1.0);
        let var = quad(|q| q * q * p.amplitude(q).powi(2), 40.0, 200_000);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_sigma() {
        assert!(GaussianPointer::new(0.0).is_err());
        assert!(GaussianPointer::new(f64::NAN).is_err());
    }

    #[test]
    fn couple_examples() {
        let c = couple(&PureState::plus(), &sz(), 0, 0.1, ptr(1.0)).unwrap();
        assert_eq!(c.branches.len(), 2);
        assert_eq!(c.branches[0].eigenvalue, -1.0);
        for b in &c.branches {
            assert!((b.state.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        assert!((c.shift(1) - 0.1).abs() < 1e-15);

        let id = Observable::spectral(identity(2)).unwrap();
        let c = couple(&PureState::plus(), &id, 0, 0.2, ptr(1.0)).unwrap();
        assert_eq!(c.branches.len(), 1);
        assert!((c.shift(0) - 0.2).abs() < 1e-15);
        assert!(
            crate::qmath::max_abs_diff_vec(c.branches[0].state.amps(), PureState::plus().amps())
                < 1e-15
        );

        let three = PureState::plus().tensor(&singlet());
        let c = couple(&three, &sz(), 0, 0.1, ptr(1.0)).unwrap();
        let expect_one = PureState::one().tensor(&singlet()).scale(r(FRAC_1_SQRT_2));
        let expect_zero = PureState::zero().tensor(&singlet()).scale(r(FRAC_1_SQRT_2));
        assert!(
            crate::qmath::max_abs_diff_vec(c.branches[0].state.amps(), expect_one.amps()) < 1e-15
        );
        assert!(
            crate::qmath::max_abs_diff_vec(c.branches[1].state.amps(), expect_zero.amps()) < 1e-15
        );

        assert!(matches!(
            couple(&PureState::plus(), &sz(), 1, 0.1, ptr(1.0)),
            Err(PointerError::QMath(QMathError::SubsystemOutOfRange { .. }))
        ));
    }

    #[test]
    fn postselect_examples() {
        let pre = PureState::plus().tensor(&singlet());
        let post = singlet().tensor(&PureState::zero());
        let c = couple(&pre, &sz(), 0, 0.0, ptr(1.0)).unwrap();
        let (_, prob) = postselect(&c, &post).unwrap();
        assert!((prob - 0.125).abs() < 1e-15);

        for g in [0.0, 0.01, 0.5, 3.0] {
            let c = couple(&PureState::plus(), &sz(), 0, g, ptr(1.0)).unwrap();
            let (bp, prob) = postselect(&c, &PureState::zero()).unwrap();
            assert!((prob - 0.5).abs() < 1e-15);
            assert_eq!(bp.branches[0].coef, r(0.0));
        }

        let c = couple(&PureState::zero(), &sz(), 0, 0.1, ptr(1.0)).unwrap();
        assert_eq!(
            postselect(&c, &PureState::one()).unwrap_err(),
            PointerError::ImpossiblePostselection
        );
    }

    #[test]
    fn success_at_zero_coupling_is_overlap_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let a = Observable::spectral(random::hermitian(&mut rng, 2)).unwrap();
            let i = random::haar_qubit(&mut rng);
            let f = random::haar_qubit(&mut rng);
            let c = couple(&i, &a, 0, 0.0, ptr(1.0)).unwrap();
            let (bp, prob) = postselect(&c, &f).unwrap();
            assert!((prob - f.inner(&i).unwrap().norm_sqr()).abs() < 1e-12);
            assert!(bp.norm_sqr() <= 1.0 + 1e-12);
            let c = couple(&i, &a, 0, rng.random_range(0.0..3.0), ptr(1.0)).unwrap();
            let (bp, _) = postselect(&c, &f).unwrap();
            assert!(bp.norm_sqr() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn moments_closed_examples() {
        let single = BranchedPointer {
            pointer: ptr(1.5),
            branches: vec![PointerBranch {
                coef: r(1.0),
                shift: 0.7,
            }],
        };
        let m = single.moments_closed().unwrap();
        assert!((m.mean_q - 0.7).abs() < 1e-15);
        assert_eq!(m.mean_p, 0.0);
        assert!((m.var_q - 2.25).abs() < 1e-14);

        let sym = BranchedPointer {
            pointer: ptr(1.0),
            branches: vec![
                PointerBranch {
                    coef: r(0.5),
                    shift: 0.4,
                },
                PointerBranch {
                    coef: r(0.5),
                    shift: -0.4,
                },
            ],
        };
        assert!(sym.moments_closed().unwrap().mean_q.abs() < 1e-16);

        let empty = BranchedPointer {
            pointer: ptr(1.0),
            branches: vec![PointerBranch {
                coef: r(0.0),
                shift: 0.0,
            }],
        };
        assert_eq!(empty.moments_closed(), Err(PointerError::ZeroNorm));
    }

    #[test]
    fn imaginary_weak_value_kicks_momentum() {
        // ψf = (|0> - i|1>)/√2 gives A_w = (1-i)/(1+i) = -i
        let f = PureState::qubit(r(1.0), C64::new(0.0, -1.0)).unwrap();
        let wv = weak_value_pure(&sz(), &PureState::plus(), &f)
            .unwrap()
            .value;
        assert!((wv - C64::new(0.0, -1.0)).norm() < 1e-15);
        let g = 0.01;
        let c = couple(&PureState::plus(), &sz(), 0, g, ptr(1.0)).unwrap();
        let (bp, _) = postselect(&c, &f).unwrap();
        let closed = bp.moments_closed().unwrap();
        let grid = bp.moments_grid(&Grid::default()).unwrap();
        assert!(closed.mean_q.abs() < 1e-12);
        assert!((closed.mean_p - (-g / 2.0)).abs() < 0.02 * g / 2.0);
        assert!((grid.mean_p - closed.mean_p).abs() < 1e-8);
    }

    #[test]
    fn grid_examples() {
        let single = BranchedPointer {
            pointer: ptr(1.0),
            branches: vec![PointerBranch {
                coef: r(1.0),
                shift: 0.3,
            }],
        };
        let m = single.moments_grid(&Grid::default()).unwrap();
        assert!((m.mean_q - 0.3).abs() < 1e-8);

        let g = Grid::default();
        let dx = (g.max - g.min) / g.points as f64;
        let p = ptr(1.0);
        let norm: f64 = (0..g.points)
            .map(|j| p.amplitude(g.min + j as f64 * dx).powi(2))
            .sum::<f64>()
            * dx;
        assert!((norm - 1.0).abs() < 1e-10);

        assert_eq!(
            single.moments_grid(&Grid { points: 1000, ..g }),
            Err(PointerError::GridPoints(1000))
        );
        assert!(matches!(
            single.moments_grid(&Grid {
                min: -5.0,
                max: 5.0,
                points: 1024
            }),
            Err(PointerError::GridTooSmall(_))
        ));
    }

    #[test]
    fn grid_agrees_with_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..50 {
            let k = rng.random_range(1..=6);
            let sigma = rng.random_range(0.5..2.0);
            let branches = (0..k)
                .map(|_| PointerBranch {
                    coef: C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    shift: rng.random_range(-3.0..3.0),
                })
                .collect();
            let bp = BranchedPointer {
                pointer: ptr(sigma),
                branches,
            };
            let a = bp.moments_closed().unwrap();
            let b = bp.moments_grid(&Grid::default()).unwrap();
            assert!((a.mean_q - b.mean_q).abs() < 1e-8);
            assert!((a.mean_p - b.mean_p).abs() < 1e-8);
            assert!((a.var_q - b.var_q).abs() < 1e-8);
        }
    }

    #[test]
    fn sweep_validation() {
        assert!(validate_sweep(&[0.1, 0.01]).is_err());
        assert!(validate_sweep(&[0.01, 0.1, 0.001]).is_err());
        assert!(validate_sweep(&[0.1, 0.05, 0.02]).is_err());
        assert!(validate_sweep(&[0.1, 0.0, -0.1]).is_err());
        assert!(validate_sweep(&[0.1, 0.01, 0.001]).is_ok());
    }

    #[test]
    fn extrapolation_recovers_quadratic() {
        let gs: [f64; 4] = [0.3, 0.1, 0.03, 0.01];
        let ys: Vec<f64> = gs
            .iter()
            .map(|g| 2.5 - 0.7 * g * g + 0.2 * g.powi(4))
            .collect();
        assert!((extrapolate_to_zero(&gs, &ys) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn single_branch_estimate_is_exact_at_every_g() {
        let m = WeakMeasurement {
            pre: PureState::plus().tensor(&singlet()),
            observable: sz(),
            subsystem: 0,
            post: singlet().tensor(&PureState::zero()),
            pointer: ptr(1.0),
        };
        let est = estimate_weak_value(&m, &[0.1, 0.01, 0.001]).unwrap();
        for p in &est.points {
            assert!((p.re_est - 1.0).abs() < 1e-12);
            assert!(p.im_est.abs() < 1e-12);
        }
        assert!((est.value - r(1.0)).norm() < 1e-12);
    }

    #[test]
    fn identity_observable_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let m = WeakMeasurement {
            pre: random::haar_qubit(&mut rng),
            observable: Observable::spectral(identity(2)).unwrap(),
            subsystem: 0,
            post: random::haar_qubit(&mut rng),
            pointer: ptr(0.8),
        };
        let est = estimate_weak_value(&m, &[0.1, 0.01, 0.001]).unwrap();
        assert!((est.value - r(1.0)).norm() < 1e-10);
    }

    #[test]
    fn imaginary_estimate_extrapolates() {
        for (im, expect) in [(-1.0, -1.0), (1.0, 1.0)] {
            let m = WeakMeasurement {
                pre: PureState::plus(),
                observable: sz(),
                subsystem: 0,
                post: PureState::qubit(r(1.0), C64::new(0.0, im)).unwrap(),
                pointer: ptr(1.0),
            };
            let est = estimate_weak_value(&m, &[0.1, 0.01, 0.001]).unwrap();
            assert!((est.value - C64::new(0.0, expect)).norm() < 1e-6);
        }
    }

    #[test]
    fn first_order_law_is_quadratic_in_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let mut done = 0;
        while done < 50 {
            let a = Observable::spectral(random::hermitian(&mut rng, 2)).unwrap();
            let i = random::haar_qubit(&mut rng);
            let f = random::haar_qubit(&mut rng);
            if f.inner(&i).unwrap().norm() < 0.1 {
                continue;
            }
            let aw = weak_value_pure(&a, &i, &f).unwrap().value;
            if aw.norm() > 5.0 {
                continue;
            }
            let m = WeakMeasurement {
                pre: i,
                observable: a,
                subsystem: 0,
                post: f,
                pointer: ptr(1.0),
            };
            let est = estimate_weak_value(&m, &[0.1, 0.01, 0.001]).unwrap();
            let errs: Vec<f64> = est
                .points
                .iter()
                .map(|p| (p.re_est - aw.re).abs() / (p.g * p.g))
                .collect();
            let c = errs.iter().fold(0.0f64, |a, b| a.max(*b));
            assert!(c.is_finite() && c < 1e6);
            // the scaled error stays of the same size as g shrinks
            assert!(errs[2] <= 2.0 * errs[0].max(errs[1]) + 1e-4);
            done += 1;
        }
    }

    #[test]
    fn mixed_estimate_examples() {
        let half = DensityOp::maximally_mixed(vec![2]).unwrap();
        let m = MixedWeakMeasurement {
            pre: Ensemble::from_density(&half),
            observable: sz(),
            subsystem: 0,
            post: Ensemble::pure(PureState::zero()),
            pointer: ptr(1.0),
        };
        let est = estimate_weak_value_mixed(&m, &[0.1, 0.01, 0.001]).unwrap();
        assert!((est.value - r(1.0)).norm() < 1e-6);

        let m = MixedWeakMeasurement {
            pre: Ensemble::pure(PureState::plus()),
            observable: sz(),
            subsystem: 0,
            post: Ensemble::from_density(&half),
            pointer: ptr(1.0),
        };
        let est = estimate_weak_value_mixed(&m, &[0.1, 0.01, 0.001]).unwrap();
        assert!(est.value.norm() < 1e-6);
    }

    #[test]
    fn rank_one_mixed_reduces_to_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let a = Observable::spectral(random::hermitian(&mut rng, 2)).unwrap();
        let pure = WeakMeasurement {
            pre: random::haar_qubit(&mut rng),
            observable: a,
            subsystem: 0,
            post: random::haar_qubit(&mut rng),
            pointer: ptr(1.0),
        };
        let gs = [0.1, 0.01, 0.001];
        let p = estimate_weak_value(&pure, &gs).unwrap();
        let m = estimate_weak_value_mixed(&MixedWeakMeasurement::from(&pure), &gs).unwrap();
        assert!((p.value - m.value).norm() < 1e-12);
    }

    #[test]
    fn strong_coupling_separates_branches() {
        let c = couple(&PureState::plus(), &sz(), 0, 20.0, ptr(1.0)).unwrap();
        let (bp, _) = postselect(&c, &PureState::plus()).unwrap();
        let m = bp.moments_closed().unwrap();
        // two well separated peaks at ±20: variance ≈ 20² + σ²
        assert!((m.var_q - 401.0).abs() < 1e-6);
    }
}
