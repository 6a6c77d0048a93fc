//! Machine-readable run reports. Every report carries the same key set;
//! values that do not apply to a mode are `null` or empty.

use std::io::Write;

use serde::Serialize;
use wvlab_core::pointer::Grid;
use wvlab_core::protocol::{ConditionalModel, ProtocolResult, Scenario};
use wvlab_core::{Tolerances, C64};

use crate::CliError;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PointRow {
    pub g: f64,
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub re_est: f64,
    pub im_est: f64,
    pub success_prob: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SampleRow {
    pub shots: u64,
    pub seed: u64,
    pub bell_counts: [u64; 4],
    pub accepted: u64,
    pub q_count: u64,
    pub mean_q: Option<f64>,
    pub q_std_error: Option<f64>,
    pub p_count: u64,
    pub mean_p: Option<f64>,
    pub p_std_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EventRow {
    pub stage: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ToleranceRow {
    pub algebraic: f64,
    pub normalization: f64,
    pub overlap: f64,
    pub eigen_cluster: f64,
    pub psd: f64,
}

impl From<&Tolerances> for ToleranceRow {
    fn from(t: &Tolerances) -> Self {
        Self {
            algebraic: t.algebraic,
            normalization: t.normalization,
            overlap: t.overlap,
            eigen_cluster: t.eigen_cluster,
            psd: t.psd,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub scenario_hash: String,
    pub mode: &'static str,
    pub accepted_outcome: u8,
    pub analytic_wv: [f64; 2],
    pub estimate: Option<[f64; 2]>,
    pub bell_outcome_probs: [f64; 4],
    pub joint_success_prob: f64,
    pub points: Vec<PointRow>,
    pub grid_max_deviation: Option<f64>,
    pub samples: Option<SampleRow>,
    pub transcript: Vec<EventRow>,
    pub tolerances: ToleranceRow,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub struct ReportContext<'a> {
    pub name: &'a str,
    pub hash: &'a str,
    pub mode: &'static str,
    pub seed: u64,
    pub tolerances: &'a Tolerances,
}

impl Report {
    pub fn new(ctx: &ReportContext<'_>, s: &Scenario, res: &ProtocolResult) -> Self {
        let points = res
            .sweep
            .iter()
            .map(|p| PointRow {
                g: p.g,
                mean_q: p.moments.mean_q,
                mean_p: p.moments.mean_p,
                var_q: p.moments.var_q,
                re_est: p.re_est,
                im_est: p.im_est,
                success_prob: p.success_prob,
            })
            .collect();
        let samples = res.samples.map(|st| SampleRow {
            shots: res.shots_used,
            seed: ctx.seed,
            bell_counts: st.bell_counts,
            accepted: st.accepted,
            q_count: st.q.count,
            mean_q: st.q.mean(),
            q_std_error: st.q.std_error(),
            p_count: st.p.count,
            mean_p: st.p.mean(),
            p_std_error: st.p.std_error(),
        });
        Self {
            scenario: ctx.name.to_string(),
            scenario_hash: ctx.hash.to_string(),
            mode: ctx.mode,
            accepted_outcome: s.accepted_outcome.label(),
            analytic_wv: pair(res.analytic_wv),
            estimate: res.pointer_estimate.map(pair),
            bell_outcome_probs: res.bell_outcome_probs,
            joint_success_prob: res.joint_success_prob,
            points,
            grid_max_deviation: None,
            samples,
            transcript: res
                .transcript
                .iter()
                .map(|e| EventRow {
                    stage: e.stage.as_str(),
                    detail: e.detail.clone(),
                })
                .collect(),
            tolerances: ctx.tolerances.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CliError::Io(format!("writing sweep table: {e}"));
        w.write_record(["g", "meanQ", "meanP", "reEst", "imEst", "successProb"])
            .map_err(io)?;
        for p in &self.points {
            w.serialize((p.g, p.mean_q, p.mean_p, p.re_est, p.im_est, p.success_prob))
                .map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("writing sweep table: {e}")))
    }
}

/// Largest disagreement between closed-form and grid moments of the
/// conditional pointer over the sweep couplings.
pub fn grid_deviation(s: &Scenario, grid: &Grid, gs: &[f64]) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for &g in gs {
        let model = ConditionalModel::build(s, g).map_err(|e| CliError::physics(&e))?;
        let closed = model.pointer_moments().map_err(|e| CliError::physics(&e))?;
        let on_grid = model
            .pointer_moments_with(|bp| bp.moments_grid(grid))
            .map_err(|e| CliError::physics(&e))?;
        worst = worst
            .max((closed.mean_q - on_grid.mean_q).abs())
            .max((closed.mean_p - on_grid.mean_p).abs())
            .max((closed.var_q - on_grid.var_q).abs());
    }
    Ok(worst)
}
