//! JSON scenario files.
//!
//! Matrices are flat row-major lists of `[re, im]` pairs; states are lists of
//! `[re, im]` amplitudes. Exactly one of `psi_i`/`rho_i` and one of
//! `psi_f`/`rho_f` must be present.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wvlab_core::pointer::{GaussianPointer, Grid};
use wvlab_core::protocol::{Scenario, Selection};
use wvlab_core::qmath::{CMatrix, CVector, DensityOp, Observable, PureState};
use wvlab_core::resources::{BellOutcome, ResourceKind};
use wvlab_core::{Tolerances, C64};

use crate::CliError;

pub type Pair = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ResourceSpec {
    Singlet {},
    Nonmax { n: Pair },
    Werner { p: f64 },
    Custom { xi: Vec<Pair> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointerSpec {
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub resource: ResourceSpec,
    pub observable: Vec<Pair>,
    #[serde(default)]
    pub psi_i: Option<Vec<Pair>>,
    #[serde(default)]
    pub rho_i: Option<Vec<Pair>>,
    #[serde(default)]
    pub psi_f: Option<Vec<Pair>>,
    #[serde(default)]
    pub rho_f: Option<Vec<Pair>>,
    pub pointer: PointerSpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub g: f64,
    #[serde(default)]
    pub g_values: Option<Vec<f64>>,
    #[serde(default)]
    pub accepted_outcome: Option<u8>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn parse_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("{key}: {msg}"))
}

fn complex(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

fn square_matrix(key: &str, entries: &[Pair], dim: usize) -> Result<CMatrix, CliError> {
    if entries.len() != dim * dim {
        return Err(parse_err(
            key,
            format!(
                "expected {} row-major [re, im] entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            ),
        ));
    }
    if entries.iter().flatten().any(|x| !x.is_finite()) {
        return Err(parse_err(key, "entries must be finite"));
    }
    Ok(CMatrix::from_fn(dim, dim, |r, c| {
        complex(&entries[dim * r + c])
    }))
}

fn qubit_state(key: &str, amps: &[Pair], tol: &Tolerances) -> Result<PureState, CliError> {
    if amps.len() != 2 {
        return Err(parse_err(
            key,
            format!("expected 2 amplitudes, got {}", amps.len()),
        ));
    }
    let v = CVector::from_iterator(2, amps.iter().map(complex));
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > tol.normalization {
        return Err(parse_err(key, format!("state norm {norm} is not 1")));
    }
    PureState::normalize(vec![2], v).map_err(|e| parse_err(key, e))
}

fn selection(
    pure_key: &str,
    mixed_key: &str,
    pure: &Option<Vec<Pair>>,
    mixed: &Option<Vec<Pair>>,
    tol: &Tolerances,
) -> Result<Selection, CliError> {
    match (pure, mixed) {
        (Some(a), None) => Ok(Selection::Pure(qubit_state(pure_key, a, tol)?)),
        (None, Some(m)) => {
            let mat = square_matrix(mixed_key, m, 2)?;
            Ok(Selection::Mixed(
                DensityOp::with_tolerances(vec![2], mat, tol)
                    .map_err(|e| parse_err(mixed_key, e))?,
            ))
        }
        (Some(_), Some(_)) => Err(parse_err(
            pure_key,
            format!("give either {pure_key} or {mixed_key}, not both"),
        )),
        (None, None) => Err(parse_err(
            pure_key,
            format!("one of {pure_key} or {mixed_key} is required"),
        )),
    }
}

/// Parsed file together with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub hash: String,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            CliError::Parse(format!("{key}: {inner}"))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form, independent of whitespace and key order.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario files serialize");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid.as_ref().map(|g| Grid {
            min: g.min,
            max: g.max,
            points: g.points,
        })
    }

    pub fn resource(&self, tol: &Tolerances) -> Result<ResourceKind, CliError> {
        Ok(match &self.resource {
            ResourceSpec::Singlet {} => ResourceKind::Singlet,
            ResourceSpec::Nonmax { n } => ResourceKind::NonMax(complex(n)),
            ResourceSpec::Werner { p } => ResourceKind::Werner(*p),
            ResourceSpec::Custom { xi } => {
                let mat = square_matrix("resource.xi", xi, 4)?;
                ResourceKind::Custom(
                    DensityOp::with_tolerances(vec![2, 2], mat, tol)
                        .map_err(|e| parse_err("resource.xi", e))?,
                )
            }
        })
    }

    /// Builds the protocol scenario. Malformed inputs are parse errors; a
    /// well-formed but physically unusable scenario is a physics error.
    pub fn to_scenario(&self, tol: &Tolerances) -> Result<Scenario, CliError> {
        let resource = self.resource(tol)?;
        let obs = square_matrix("observable", &self.observable, 2)?;
        let observable =
            Observable::spectral_with(obs, tol).map_err(|e| parse_err("observable", e))?;
        let pre = selection("psi_i", "rho_i", &self.psi_i, &self.rho_i, tol)?;
        let post = selection("psi_f", "rho_f", &self.psi_f, &self.rho_f, tol)?;
        let pointer =
            GaussianPointer::new(self.pointer.sigma).map_err(|e| parse_err("pointer.sigma", e))?;
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(parse_err("g", "coupling must be finite and non-negative"));
        }
        if let Some(g) = &self.grid {
            if g.points < 2 || !g.points.is_power_of_two() {
                return Err(parse_err("grid.points", "must be a power of two"));
            }
            if g.max.partial_cmp(&g.min) != Some(std::cmp::Ordering::Greater) {
                return Err(parse_err("grid", "max must exceed min"));
            }
        }
        let mut scenario = Scenario::new(resource, observable, pre, post, self.g, pointer)
            .map_err(|e| CliError::physics(&e))?;
        if let Some(k) = self.accepted_outcome {
            let outcome = BellOutcome::new(k).map_err(|e| parse_err("accepted_outcome", e))?;
            scenario = scenario.with_accepted_outcome(outcome);
        }
        if let Some(gs) = &self.g_values {
            scenario = scenario
                .with_sweep(gs.clone())
                .map_err(|e| parse_err("g_values", e))?;
        }
        Ok(scenario)
    }

    pub fn into_loaded(self, tol: &Tolerances) -> Result<LoadedScenario, CliError> {
        let scenario = self.to_scenario(tol)?;
        let hash = self.hash();
        Ok(LoadedScenario {
            file: self,
            scenario,
            hash,
        })
    }
}
