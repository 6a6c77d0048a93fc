//! Classical messages exchanged between Alice and Bob.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    Order,
    Timeout,
    ScenarioMismatch,
    Disconnected,
    Malformed,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbortReason::Order => "order",
            AbortReason::Timeout => "timeout",
            AbortReason::ScenarioMismatch => "scenario-mismatch",
            AbortReason::Disconnected => "disconnected",
            AbortReason::Malformed => "malformed",
        })
    }
}

/// Row-major 2×2 complex matrix, entries as `[re, im]`.
pub type WireMatrix = [[f64; 2]; 4];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Body {
    Hello {
        role: Role,
        scenario_hash: String,
    },
    Scenario {
        scenario_hash: String,
        shots: u64,
        seed: u64,
    },
    /// Sent by Alice once the coupling is applied; Bob echoes it when ready.
    CoupleDone {
        g: f64,
    },
    BellResult {
        shot: u64,
        outcome: u8,
    },
    PostselectRequest {
        shot: u64,
        projector: WireMatrix,
    },
    PostselectResult {
        shot: u64,
        success: bool,
    },
    PointerReport {
        shots: u64,
        accepted: u64,
        mean_q: Option<f64>,
        mean_p: Option<f64>,
        q_count: u64,
        q_sum: f64,
        q_sum_sq: f64,
        p_count: u64,
        p_sum: f64,
        p_sum_sq: f64,
    },
    Abort {
        reason: AbortReason,
        detail: String,
    },
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Hello { .. } => "HELLO",
            Body::Scenario { .. } => "SCENARIO",
            Body::CoupleDone { .. } => "COUPLE_DONE",
            Body::BellResult { .. } => "BELL_RESULT",
            Body::PostselectRequest { .. } => "POSTSELECT_REQUEST",
            Body::PostselectResult { .. } => "POSTSELECT_RESULT",
            Body::PointerReport { .. } => "POINTER_REPORT",
            Body::Abort { .. } => "ABORT",
        }
    }

    /// Field-level constraints that JSON typing alone cannot express.
    pub fn validate(&self) -> Result<(), String> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be finite"))
            }
        };
        match self {
            Body::BellResult { outcome, .. } if !(1..=4).contains(outcome) => {
                Err(format!("Bell outcome {outcome} outside 1..=4"))
            }
            Body::CoupleDone { g } => finite(*g, "g"),
            Body::PostselectRequest { projector, .. } => projector
                .iter()
                .flatten()
                .try_for_each(|x| finite(*x, "projector entry")),
            Body::PointerReport {
                mean_q,
                mean_p,
                q_sum,
                q_sum_sq,
                p_sum,
                p_sum_sq,
                ..
            } => {
                for (x, what) in [
                    (q_sum, "q_sum"),
                    (q_sum_sq, "q_sum_sq"),
                    (p_sum, "p_sum"),
                    (p_sum_sq, "p_sum_sq"),
                ] {
                    finite(*x, what)?;
                }
                for m in [mean_q, mean_p].into_iter().flatten() {
                    finite(*m, "mean")?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Message {
    pub session_id: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}
