//! On-disk document forms of models and solve results.
//!
//! Documents always carry `f64` numbers regardless of the in-memory scalar
//! type. Model documents list every transition as an `{s, a, s', p, r}`
//! record plus per-state allowed-action lists; action names on disk are
//! `"a0"`, `"a1"`, `"a2"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, MdpModel, ModelError, Policy, StateId};
use crate::scalar::Scalar;
use crate::solver::SolveResult;

/// Errors from document parsing and conversion.
#[derive(Debug, Error)]
pub enum DocError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("allowed-action list disagrees with transition records at state s{state}")]
    AllowedMismatch { state: usize },
    #[error("allowed lists cover {lists} states but n_states is {n_states}")]
    AllowedLengthMismatch { lists: usize, n_states: usize },
}

/// One `{s, a, s', p, r}` transition record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: String,
    #[serde(rename = "s'")]
    pub next: usize,
    pub p: f64,
    pub r: f64,
}

/// Document form of an [`MdpModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub n_states: usize,
    pub gamma: f64,
    pub allowed: Vec<Vec<String>>,
    pub transitions: Vec<TransitionRecord>,
}

impl ModelDoc {
    /// Captures `model` as a document. Transitions come out sorted by
    /// (state, action, next state), so equal models produce equal documents.
    pub fn from_model<S: Scalar>(model: &MdpModel<S>) -> Self {
        let mut allowed = Vec::with_capacity(model.n_states());
        let mut transitions = Vec::new();
        for state in model.states() {
            allowed.push(
                model
                    .allowed(state)
                    .map(|a| a.label().to_string())
                    .collect(),
            );
            for action in model.allowed(state) {
                for outcome in model.outcomes(state, action).expect("allowed pair") {
                    transitions.push(TransitionRecord {
                        s: state.index(),
                        a: action.label().to_string(),
                        next: outcome.next.index(),
                        p: outcome.probability.to_f(),
                        r: outcome.reward.to_f(),
                    });
                }
            }
        }
        ModelDoc {
            n_states: model.n_states(),
            gamma: model.gamma().to_f(),
            allowed,
            transitions,
        }
    }

    /// Rebuilds the model. The `allowed` lists must agree exactly with the
    /// (state, action) pairs appearing in `transitions`.
    pub fn to_model<S: Scalar>(&self) -> Result<MdpModel<S>, DocError> {
        if self.allowed.len() != self.n_states {
            return Err(DocError::AllowedLengthMismatch {
                lists: self.allowed.len(),
                n_states: self.n_states,
            });
        }

        // Group records by (state, action), keeping record order within a row.
        let mut rows: BTreeMap<(usize, usize), Vec<(usize, S, S)>> = BTreeMap::new();
        for record in &self.transitions {
            let action: Action = record.a.parse().map_err(ModelError::from)?;
            rows.entry((record.s, action.index())).or_default().push((
                record.next,
                S::from_f(record.p),
                S::from_f(record.r),
            ));
        }

        let mut builder = MdpModel::builder(self.n_states, S::from_f(self.gamma))?;
        for ((state, action_index), outcomes) in &rows {
            builder.row(*state, Action::ALL[*action_index], outcomes.iter().copied())?;
        }
        let model = builder.build();

        for (state, names) in self.allowed.iter().enumerate() {
            let mut declared: Vec<Action> = Vec::with_capacity(names.len());
            for name in names {
                declared.push(name.parse().map_err(ModelError::from)?);
            }
            declared.sort_by_key(|a| a.index());
            let actual: Vec<Action> = if state < model.n_states() {
                model.allowed(StateId::new(state)).collect()
            } else {
                Vec::new()
            };
            if declared != actual {
                return Err(DocError::AllowedMismatch { state });
            }
        }
        Ok(model)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(json: &str) -> Result<Self, DocError> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Policy as the on-disk map `{"s0": "a2", ...}`.
pub fn policy_to_map(policy: &Policy) -> BTreeMap<String, String> {
    policy
        .actions()
        .iter()
        .enumerate()
        .map(|(s, a)| (format!("s{s}"), a.label().to_string()))
        .collect()
}

/// Document form of a [`SolveResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDoc {
    pub iterations: usize,
    pub converged: bool,
    pub epsilon: f64,
    /// Final value per state.
    pub values: Vec<f64>,
    pub policy: BTreeMap<String, String>,
    /// One value vector per completed iteration; entry 0 is all zeros.
    pub history: Vec<Vec<f64>>,
}

impl SolveDoc {
    pub fn from_result<S: Scalar>(result: &SolveResult<S>) -> Self {
        SolveDoc {
            iterations: result.iterations,
            converged: result.converged,
            epsilon: result.epsilon.to_f(),
            values: result.optimal_values.iter().map(|v| v.to_f()).collect(),
            policy: policy_to_map(&result.policy),
            history: result
                .history
                .iter()
                .map(|v| v.iter().map(|x| x.to_f()).collect())
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }
}
