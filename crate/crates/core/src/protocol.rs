//! Remote pre/postselection protocol on three qubits.
//!
//! Particle 1 (factor 0) is prepared in `ρi` and shares nothing with the
//! resource on particles 2–3 (factors 1, 2). The observable is coupled to
//! particle 1, Alice measures particles 1–2 in the resource's Bell-type basis,
//! and on the accepted outcome Bob rotates particle 3 and projects it on `ρf`.
//! The pointer is read out only for accepted shots that Bob reports as successful.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::pointer::{
    couple, estimate_weak_value_mixed, mixture_moments_with, postselect, BranchedPointer, Ensemble,
    GaussianPointer, MixedWeakMeasurement, PointerError, PointerMoments, SweepPoint,
};
use crate::qmath::{DensityOp, Observable, PureState, QMathError};
use crate::resources::{BellOutcome, ResourceError, ResourceKind, ResourceState};
use crate::weakvalues::{Evaluator, WeakValueError};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("impossible postselection: accepted outcome {outcome} with Bob's projection has zero probability")]
    ImpossiblePostselection { outcome: BellOutcome },

    #[error("insufficient statistics: no accepted shots out of {shots}")]
    InsufficientStatistics { shots: u64 },

    #[error("pointer sampler gave up after {0} rejections")]
    SamplerExhausted(u64),

    #[error(transparent)]
    Pointer(#[from] PointerError),

    #[error(transparent)]
    WeakValue(#[from] WeakValueError),

    #[error(transparent)]
    Resource(#[from] ResourceError),

    #[error(transparent)]
    QMath(#[from] QMathError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// A pre- or postselection on one qubit.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Pure(PureState),
    Mixed(DensityOp),
}

impl Selection {
    fn dims(&self) -> &[usize] {
        match self {
            Selection::Pure(s) => s.dims(),
            Selection::Mixed(d) => d.dims(),
        }
    }

    pub fn density(&self) -> Result<DensityOp> {
        match self {
            Selection::Pure(s) => Ok(s.density()?),
            Selection::Mixed(d) => Ok(d.clone()),
        }
    }

    pub fn ensemble(&self) -> Ensemble {
        match self {
            Selection::Pure(s) => Ensemble::pure(s.clone()),
            Selection::Mixed(d) => Ensemble::from_density(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub resource: ResourceKind,
    pub observable: Observable,
    pub pre: Selection,
    pub post: Selection,
    pub g: f64,
    pub g_sweep: Option<Vec<f64>>,
    pub pointer: GaussianPointer,
    pub accepted_outcome: BellOutcome,
}

impl Scenario {
    /// Scenario accepting the resource's default outcome.
    pub fn new(
        resource: ResourceKind,
        observable: Observable,
        pre: Selection,
        post: Selection,
        g: f64,
        pointer: GaussianPointer,
    ) -> Result<Self> {
        let accepted_outcome = resource.default_accepted_outcome();
        let s = Self {
            resource,
            observable,
            pre,
            post,
            g,
            g_sweep: None,
            pointer,
            accepted_outcome,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_accepted_outcome(mut self, outcome: BellOutcome) -> Self {
        self.accepted_outcome = outcome;
        self
    }

    pub fn with_sweep(mut self, g_sweep: Vec<f64>) -> Result<Self> {
        crate::pointer::validate_sweep(&g_sweep)?;
        self.g_sweep = Some(g_sweep);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observable.dim() != 2 {
            return Err(ProtocolError::InvalidScenario(format!(
                "observable must act on one qubit, got dimension {}",
                self.observable.dim()
            )));
        }
        for (what, sel) in [("preselection", &self.pre), ("postselection", &self.post)] {
            if sel.dims() != [2] {
                return Err(ProtocolError::InvalidScenario(format!(
                    "{what} must be a single qubit, got dims {:?}",
                    sel.dims()
                )));
            }
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(ProtocolError::InvalidScenario(format!(
                "coupling must be finite and non-negative, got {}",
                self.g
            )));
        }
        if let Some(sweep) = &self.g_sweep {
            crate::pointer::validate_sweep(sweep)?;
        }
        self.resource.make()?;
        Ok(())
    }

    /// Bob's effect on particle 3: his rotation applied to the postselection.
    pub fn bob_effect(&self) -> Result<DensityOp> {
        let rot = self.resource.bob_rotation();
        let rho_f = self.post.density()?;
        Ok(DensityOp::new(vec![2], &rot * rho_f.mat() * rot.adjoint())?)
    }

    /// Couplings used for the pointer extrapolation.
    pub fn sweep(&self) -> Vec<f64> {
        match &self.g_sweep {
            Some(s) => s.clone(),
            None if self.g > 0.0 => vec![self.g, self.g / 10.0, self.g / 100.0],
            None => vec![0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preselect,
    Couple,
    BellMeasure,
    ClassicalMsg,
    BobProject,
    Readout,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preselect => "preselect",
            Stage::Couple => "couple",
            Stage::BellMeasure => "bell_measure",
            Stage::ClassicalMsg => "classical_msg",
            Stage::BobProject => "bob_project",
            Stage::Readout => "readout",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The order every run reports its stages in.
pub const EVENT_SEQUENCE: [Stage; 7] = [
    Stage::Preselect,
    Stage::Couple,
    Stage::BellMeasure,
    Stage::ClassicalMsg,
    Stage::BobProject,
    Stage::ClassicalMsg,
    Stage::Readout,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub stage: Stage,
    pub detail: String,
}

/// Running sums for one pointer quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn std_error(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq - n * mean * mean) / (n - 1.0);
        Some((var.max(0.0) / n).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    Position,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerSample {
    pub quadrature: Quadrature,
    pub value: f64,
}

/// What happened in one shot. `success` is `None` when Alice's outcome was
/// not the accepted one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotOutcome {
    pub outcome: BellOutcome,
    pub success: Option<bool>,
    pub sample: Option<PointerSample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    pub bell_counts: [u64; 4],
    pub accepted: u64,
    pub q: Accumulator,
    pub p: Accumulator,
}

impl SampleStats {
    /// Shots must be recorded in shot order for bit-exact reproducibility.
    pub fn record(&mut self, shot: &ShotOutcome) {
        self.bell_counts[shot.outcome.index()] += 1;
        if shot.success == Some(true) {
            self.accepted += 1;
        }
        if let Some(s) = shot.sample {
            match s.quadrature {
                Quadrature::Position => self.q.push(s.value),
                Quadrature::Momentum => self.p.push(s.value),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub analytic_wv: C64,
    /// `None` only for sampled runs that cannot be scaled (g = 0 or no samples).
    pub pointer_estimate: Option<C64>,
    pub bell_outcome_probs: [f64; 4],
    pub joint_success_prob: f64,
    pub shots_used: u64,
    pub sweep: Vec<SweepPoint>,
    pub samples: Option<SampleStats>,
    pub transcript: Vec<Event>,
}

/// Exact statistics of the protocol at one coupling strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalModel {
    pub g: f64,
    pub accepted: BellOutcome,
    pub bell_probs: [f64; 4],
    pub joint: f64,
    /// Conditional pointer components with weights summing to one.
    pub components: Vec<(f64, BranchedPointer)>,
}

fn three_qubit_ensembles(s: &Scenario) -> Result<(Ensemble, Ensemble)> {
    let resource = match s.resource.make()? {
        ResourceState::Pure(r) => Ensemble::pure(r),
        ResourceState::Mixed(d) => Ensemble::from_density(&d),
    };
    let mut pre = Vec::new();
    for (pl, a) in s.pre.ensemble().components {
        for (pr, r) in &resource.components {
            pre.push((pl * pr, a.tensor(r)));
        }
    }
    let basis = s.resource.measurement_basis()?;
    let bell = &basis[s.accepted_outcome.index()];
    let rot = s.resource.bob_rotation();
    let post = s
        .post
        .ensemble()
        .components
        .into_iter()
        .map(|(q, f)| Ok((q, bell.tensor(&f.apply(&rot)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok((Ensemble { components: pre }, Ensemble { components: post }))
}

fn postselect_or_empty(
    coupled: &crate::pointer::CoupledState,
    post: &PureState,
) -> Result<Option<BranchedPointer>> {
    match postselect(coupled, post) {
        Ok((bp, _)) => Ok(Some(bp)),
        Err(PointerError::ImpossiblePostselection) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl ConditionalModel {
    pub fn build(s: &Scenario, g: f64) -> Result<Self> {
        let (pre, post) = three_qubit_ensembles(s)?;
        let basis = s.resource.measurement_basis()?;
        let computational = [PureState::zero(), PureState::one()];
        let mut bell_probs = [0.0; 4];
        let mut raw = Vec::new();
        for (pl, state) in &pre.components {
            let coupled = couple(state, &s.observable, 0, g, s.pointer)?;
            for (i, b) in basis.iter().enumerate() {
                for c in &computational {
                    if let Some(bp) = postselect_or_empty(&coupled, &b.tensor(c))? {
                        bell_probs[i] += pl * bp.norm_sqr();
                    }
                }
            }
            for (qk, f) in &post.components {
                if let Some(bp) = postselect_or_empty(&coupled, f)? {
                    raw.push((pl * qk * bp.norm_sqr(), bp));
                }
            }
        }
        let joint: f64 = raw.iter().map(|(w, _)| w).sum();
        let components = if joint > 0.0 {
            raw.into_iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(w, bp)| (w / joint, bp))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            g,
            accepted: s.accepted_outcome,
            bell_probs,
            joint,
            components,
        })
    }

    /// Exact moments of the conditional pointer.
    pub fn pointer_moments(&self) -> Result<PointerMoments> {
        self.pointer_moments_with(BranchedPointer::moments_closed)
    }

    /// Conditional moments with per-component moments supplied by `moments`.
    pub fn pointer_moments_with(
        &self,
        moments: impl Fn(&BranchedPointer) -> std::result::Result<PointerMoments, PointerError>,
    ) -> Result<PointerMoments> {
        // component weights already include each component's success probability
        let priors: Vec<(f64, BranchedPointer)> = self
            .components
            .iter()
            .map(|(w, bp)| (w / bp.norm_sqr(), bp.clone()))
            .collect();
        Ok(mixture_moments_with(&priors, moments)?.0)
    }

    /// Probability that Bob succeeds given Alice reported the accepted outcome.
    pub fn bob_success_prob(&self) -> f64 {
        let pa = self.bell_probs[self.accepted.index()];
        if pa > 0.0 {
            (self.joint / pa).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// The weak value the protocol is designed to reveal.
pub fn analytic_weak_value(s: &Scenario) -> Result<C64> {
    let ev = Evaluator::default();
    let default_outcome = s.accepted_outcome == s.resource.default_accepted_outcome();
    let a_full = s.observable.lift(&[2, 2, 2], 0)?;
    match (&s.resource, &s.pre, &s.post) {
        (r, Selection::Pure(i), Selection::Pure(f)) if r.is_pure() => {
            let psi_in = crate::weakvalues::remote_preselection(i, r)?;
            let psi_fin = crate::weakvalues::remote_postselection(f, r, s.accepted_outcome)?;
            Ok(ev.composite(&a_full, &psi_in, &psi_fin)?.value)
        }
        (ResourceKind::Werner(p), _, _) if default_outcome => Ok(ev
            .werner(&s.observable, &s.pre.density()?, &s.post.density()?, *p)?
            .value),
        (ResourceKind::Custom(xi), _, _) if default_outcome => Ok(ev
            .general(&s.observable, &s.pre.density()?, &s.post.density()?, xi)?
            .value),
        _ => {
            let chi_in = s.pre.density()?.tensor(&s.resource.density()?);
            let basis = s.resource.measurement_basis()?;
            let bob = s.bob_effect()?;
            let chi_fin = basis[s.accepted_outcome.index()].density()?.tensor(&bob);
            Ok(ev.trace_composite(&a_full, &chi_in, &chi_fin)?.value)
        }
    }
}

/// Exact probability of (accepted Bell outcome and Bob's success) at the scenario's coupling.
pub fn success_probability(s: &Scenario) -> Result<f64> {
    Ok(ConditionalModel::build(s, s.g)?.joint)
}

fn fmt_probs(p: &[f64; 4]) -> String {
    format!("[{:.6}, {:.6}, {:.6}, {:.6}]", p[0], p[1], p[2], p[3])
}

fn transcript(s: &Scenario, model: &ConditionalModel, readout: String) -> Vec<Event> {
    let details = [
        format!(
            "particle 1 prepared, resource {:?} on particles 2-3",
            s.resource
        ),
        format!("g = {}", s.g),
        format!("outcome probabilities {}", fmt_probs(&model.bell_probs)),
        format!("Alice -> Bob: outcome {} accepted", model.accepted),
        format!(
            "success probability {:.6} given acceptance",
            model.bob_success_prob()
        ),
        format!("Bob -> Alice: joint success probability {:.6}", model.joint),
        readout,
    ];
    EVENT_SEQUENCE
        .iter()
        .zip(details)
        .map(|(&stage, detail)| Event { stage, detail })
        .collect()
}

/// Deterministic path: exact conditional pointer and a g-sweep readout.
pub fn run_conditional(s: &Scenario) -> Result<ProtocolResult> {
    s.validate()?;
    let model = ConditionalModel::build(s, s.g)?;
    let analytic_wv = analytic_weak_value(s)?;
    let (pre, post) = three_qubit_ensembles(s)?;
    let m = MixedWeakMeasurement {
        pre,
        observable: s.observable.clone(),
        subsystem: 0,
        post,
        pointer: s.pointer,
    };
    let est = match estimate_weak_value_mixed(&m, &s.sweep()) {
        Err(PointerError::ImpossiblePostselection) => {
            return Err(ProtocolError::ImpossiblePostselection {
                outcome: s.accepted_outcome,
            })
        }
        other => other?,
    };
    let readout = format!("estimate {} vs analytic {}", est.value, analytic_wv);
    Ok(ProtocolResult {
        analytic_wv,
        pointer_estimate: Some(est.value),
        bell_outcome_probs: model.bell_probs,
        joint_success_prob: model.joint,
        shots_used: 0,
        transcript: transcript(s, &model, readout),
        sweep: est.points,
        samples: None,
    })
}

const BELL_WORDS: u128 = 0;
const BOB_WORDS: u128 = 1 << 10;
const COMPONENT_WORDS: u128 = 2 << 10;
const POINTER_WORDS: u128 = 3 << 10;
const MAX_REJECTIONS: u64 = 1_000_000;

/// Per-shot, per-stage random draws. Every stage of shot `k` reads its own
/// region of the ChaCha stream `k` under `seed`, so stages can be replayed
/// independently and in any order.
#[derive(Debug, Clone)]
pub struct ShotSampler {
    pub model: ConditionalModel,
    pub seed: u64,
}

impl ShotSampler {
    pub fn new(model: ConditionalModel, seed: u64) -> Self {
        Self { model, seed }
    }

    fn rng(&self, shot: u64, words: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(shot);
        rng.set_word_pos(words);
        rng
    }

    pub fn bell_outcome(&self, shot: u64) -> BellOutcome {
        let u: f64 = self.rng(shot, BELL_WORDS).random();
        let mut acc = 0.0;
        for (i, p) in self.model.bell_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return BellOutcome::from_index(i).expect("four outcomes");
            }
        }
        let last = self
            .model
            .bell_probs
            .iter()
            .rposition(|p| *p > 0.0)
            .unwrap_or(3);
        BellOutcome::from_index(last).expect("four outcomes")
    }

    pub fn bob_success(&self, shot: u64) -> bool {
        let u: f64 = self.rng(shot, BOB_WORDS).random();
        u < self.model.bob_success_prob()
    }

    /// Position on even shots, momentum on odd ones.
    pub fn pointer_sample(&self, shot: u64) -> Result<PointerSample> {
        let comps = &self.model.components;
        if comps.is_empty() {
            return Err(ProtocolError::ImpossiblePostselection {
                outcome: self.model.accepted,
            });
        }
        let u: f64 = self.rng(shot, COMPONENT_WORDS).random();
        let mut acc = 0.0;
        let mut pick = &comps[comps.len() - 1].1;
        for (w, bp) in comps {
            acc += w;
            if u < acc {
                pick = bp;
                break;
            }
        }
        let mut rng = self.rng(shot, POINTER_WORDS);
        if shot.is_multiple_of(2) {
            Ok(PointerSample {
                quadrature: Quadrature::Position,
                value: sample_position(pick, &mut rng)?,
            })
        } else {
            Ok(PointerSample {
                quadrature: Quadrature::Momentum,
                value: sample_momentum(pick, &mut rng)?,
            })
        }
    }

    pub fn shot(&self, shot: u64) -> Result<ShotOutcome> {
        let outcome = self.bell_outcome(shot);
        if outcome != self.model.accepted {
            return Ok(ShotOutcome {
                outcome,
                success: None,
                sample: None,
            });
        }
        let success = self.bob_success(shot);
        let sample = if success {
            Some(self.pointer_sample(shot)?)
        } else {
            None
        };
        Ok(ShotOutcome {
            outcome,
            success: Some(success),
            sample,
        })
    }
}

/// Rejection sampling from `|Σ c_n G(q − s_n)|²` with the Gaussian-mixture
/// envelope `(Σ|c|) Σ |c_n| G(q − s_n)²`.
fn sample_position(bp: &BranchedPointer, rng: &mut ChaCha8Rng) -> Result<f64> {
    let sigma = bp.pointer.sigma();
    let weights: Vec<f64> = bp.branches.iter().map(|b| b.coef.norm()).collect();
    let total: f64 = weights.iter().sum();
    for _ in 0..MAX_REJECTIONS {
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut centre = bp.branches[bp.branches.len() - 1].shift;
        for (w, b) in weights.iter().zip(&bp.branches) {
            acc += w;
            if u < acc {
                centre = b.shift;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        let q = centre + sigma * z;
        let envelope: f64 = total
            * weights
                .iter()
                .zip(&bp.branches)
                .map(|(w, b)| w * bp.pointer.amplitude(q - b.shift).powi(2))
                .sum::<f64>();
        let target = bp.wavefunction(q).norm_sqr();
        if rng.random::<f64>() * envelope <= target {
            return Ok(q);
        }
    }
    Err(ProtocolError::SamplerExhausted(MAX_REJECTIONS))
}

/// Rejection sampling from `|G̃(p)|² |Σ c_n e^{−ips_n}|²`, proposing from
/// `|G̃|²`, a normal law with variance `1/(4σ²)`.
fn sample_momentum(bp: &BranchedPointer, rng: &mut ChaCha8Rng) -> Result<f64> {
    let sd = 0.5 / bp.pointer.sigma();
    let total: f64 = bp.branches.iter().map(|b| b.coef.norm()).sum();
    let bound = total * total;
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = StandardNormal.sample(rng);
        let p = sd * z;
        let phase: C64 = bp
            .branches
            .iter()
            .map(|b| b.coef * C64::from_polar(1.0, -p * b.shift))
            .sum();
        if rng.random::<f64>() * bound <= phase.norm_sqr() {
            return Ok(p);
        }
    }
    Err(ProtocolError::SamplerExhausted(MAX_REJECTIONS))
}

/// Assembles a sampled result from shot outcomes recorded in shot order.
pub fn sampled_result(
    s: &Scenario,
    model: &ConditionalModel,
    stats: SampleStats,
    shots: u64,
) -> Result<ProtocolResult> {
    if stats.accepted == 0 {
        return Err(ProtocolError::InsufficientStatistics { shots });
    }
    let analytic_wv = analytic_weak_value(s)?;
    let sigma = s.pointer.sigma();
    let pointer_estimate = match (stats.q.mean(), stats.p.mean()) {
        (Some(q), Some(p)) if s.g > 0.0 => Some(C64::new(q / s.g, 2.0 * sigma * sigma * p / s.g)),
        _ => None,
    };
    let readout = format!(
        "{} of {} shots accepted, mean Q {:?}, mean P {:?}",
        stats.accepted,
        shots,
        stats.q.mean(),
        stats.p.mean()
    );
    Ok(ProtocolResult {
        analytic_wv,
        pointer_estimate,
        bell_outcome_probs: model.bell_probs,
        joint_success_prob: model.joint,
        shots_used: shots,
        sweep: Vec::new(),
        samples: Some(stats),
        transcript: transcript(s, model, readout),
    })
}

/// Seeded Monte Carlo run. Shots are simulated in parallel and reduced in
/// shot order, so the result depends only on `(scenario, shots, seed)`.
pub fn sample_shots(s: &Scenario, shots: u64, seed: u64) -> Result<ProtocolResult> {
    if shots == 0 {
        return Err(ProtocolError::InvalidScenario(
            "shots must be at least 1".into(),
        ));
    }
    s.validate()?;
    let model = ConditionalModel::build(s, s.g)?;
    let sampler = ShotSampler::new(model, seed);
    let outcomes = (0..shots)
        .into_par_iter()
        .map(|k| sampler.shot(k))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = SampleStats::default();
    for o in &outcomes {
        stats.record(o);
    }
    sampled_result(s, &sampler.model, stats, shots)
}
