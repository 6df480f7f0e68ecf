//! Builders for the concrete CPU-allocation MDP instances.
//!
//! Two process families are modelled. They share the state/action structure
//! and rewards and differ only in how likely an add/remove actually shifts
//! the load level:
//!
//! * [`ProcessKind::Sdr`]: heavy, poorly parallelizable per-core load; the
//!   built-in table uses change probabilities 0.2 (add) and 0.3 (remove).
//! * [`ProcessKind::Sdn`]: light, highly parallelizable load; the built-in
//!   table uses 0.8 (add) and 0.7 (remove).
//!
//! [`build_table1`] hand-transcribes the built-in 3-state table;
//! [`build_parameterized`] generates the same shape for any state count and
//! change probability. Both construct stochastic rows from the same
//! `(p, 1 - p)` split so the generated family reproduces the table model
//! bit for bit when fed the table's probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, MdpModel};
use crate::scalar::Scalar;

/// Default discount factor for all scenarios.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// Change probabilities swept for the SDR family.
pub const SDR_SWEEP_PS: [f64; 5] = [0.01, 0.1, 0.2, 0.3, 0.4];

/// Change probabilities swept for the SDN family.
pub const SDN_SWEEP_PS: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 0.99];

/// Cloud-process family a scenario models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessKind {
    #[serde(rename = "sdr")]
    Sdr,
    #[serde(rename = "sdn")]
    Sdn,
}

impl ProcessKind {
    pub fn label(self) -> &'static str {
        match self {
            ProcessKind::Sdr => "sdr",
            ProcessKind::Sdn => "sdn",
        }
    }

    /// Built-in table change probabilities `(add, remove)` for this kind.
    pub fn table_change_probabilities(self) -> (f64, f64) {
        match self {
            ProcessKind::Sdr => (0.2, 0.3),
            ProcessKind::Sdn => (0.8, 0.7),
        }
    }

    /// Change probabilities swept for this kind.
    pub fn sweep_probabilities(self) -> &'static [f64] {
        match self {
            ProcessKind::Sdr => &SDR_SWEEP_PS,
            ProcessKind::Sdn => &SDN_SWEEP_PS,
        }
    }
}

impl std::fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ProcessKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sdr" => Ok(ProcessKind::Sdr),
            "sdn" => Ok(ProcessKind::Sdn),
            other => Err(ScenarioError::UnknownKind {
                name: other.to_string(),
            }),
        }
    }
}

/// Parameters of one scenario instance.
///
/// `p_change` is the probability that an add/remove action actually shifts
/// the load level; when absent the kind's built-in table values apply. The
/// `p_change_add` / `p_change_remove` overrides exist to reproduce the
/// built-in table, which uses different values for the two actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_kind")]
    pub kind: ProcessKind,
    #[serde(default = "default_n_states")]
    pub n_states: usize,
    #[serde(default)]
    pub p_change: Option<f64>,
    #[serde(default)]
    pub p_change_add: Option<f64>,
    #[serde(default)]
    pub p_change_remove: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_kind() -> ProcessKind {
    ProcessKind::Sdr
}

fn default_n_states() -> usize {
    3
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl ScenarioSpec {
    /// Table-default spec: 3 states, built-in change probabilities.
    pub fn table_default(kind: ProcessKind) -> Self {
        ScenarioSpec {
            kind,
            n_states: 3,
            p_change: None,
            p_change_add: None,
            p_change_remove: None,
            gamma: DEFAULT_GAMMA,
        }
    }

    /// Spec with one change probability for both add and remove rows.
    pub fn with_p_change(kind: ProcessKind, p_change: f64) -> Self {
        ScenarioSpec {
            p_change: Some(p_change),
            ..ScenarioSpec::table_default(kind)
        }
    }

    /// Effective `(add, remove)` change probabilities after overrides.
    pub fn change_probabilities(&self) -> (f64, f64) {
        let (table_add, table_remove) = self.kind.table_change_probabilities();
        let add = self.p_change_add.or(self.p_change).unwrap_or(table_add);
        let remove = self
            .p_change_remove
            .or(self.p_change)
            .unwrap_or(table_remove);
        (add, remove)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.n_states < 3 {
            return Err(ScenarioError::TooFewStates {
                n_states: self.n_states,
            });
        }
        for p in [self.p_change, self.p_change_add, self.p_change_remove]
            .into_iter()
            .flatten()
        {
            if !(p > 0.0 && p < 1.0) {
                return Err(ScenarioError::InvalidChangeProbability { p });
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ScenarioError::InvalidGamma { gamma: self.gamma });
        }
        Ok(())
    }
}

/// Reward assignment for the generated scenario family.
///
/// `good_move` pays for remove-and-stay and add-and-drop-a-level;
/// `bad_move` penalizes add-and-stay and remove-and-climb-a-level. The
/// keep action always self-loops for a position-dependent penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRules {
    #[serde(default = "default_keep_lowest")]
    pub keep_lowest: f64,
    #[serde(default = "default_keep_intermediate")]
    pub keep_intermediate: f64,
    #[serde(default = "default_keep_highest")]
    pub keep_highest: f64,
    #[serde(default = "default_good_move")]
    pub good_move: f64,
    #[serde(default = "default_bad_move")]
    pub bad_move: f64,
}

fn default_keep_lowest() -> f64 {
    -3.0
}

fn default_keep_intermediate() -> f64 {
    -1.0
}

fn default_keep_highest() -> f64 {
    -5.0
}

fn default_good_move() -> f64 {
    5.0
}

fn default_bad_move() -> f64 {
    -5.0
}

impl Default for RewardRules {
    fn default() -> Self {
        RewardRules {
            keep_lowest: default_keep_lowest(),
            keep_intermediate: default_keep_intermediate(),
            keep_highest: default_keep_highest(),
            good_move: default_good_move(),
            bad_move: default_bad_move(),
        }
    }
}

impl RewardRules {
    fn check(&self) -> Result<(), ScenarioError> {
        let all = [
            self.keep_lowest,
            self.keep_intermediate,
            self.keep_highest,
            self.good_move,
            self.bad_move,
        ];
        if all.iter().any(|r| !r.is_finite()) {
            return Err(ScenarioError::NonFiniteReward);
        }
        Ok(())
    }

    fn keep_reward(&self, state: usize, n_states: usize) -> f64 {
        if state == 0 {
            self.keep_lowest
        } else if state == n_states - 1 {
            self.keep_highest
        } else {
            self.keep_intermediate
        }
    }
}

/// Errors from scenario construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenarios need at least 3 states, got {n_states}")]
    TooFewStates { n_states: usize },
    #[error("change probability must lie strictly in (0, 1), got {p}")]
    InvalidChangeProbability { p: f64 },
    #[error("discount factor must lie strictly in (0, 1), got {gamma}")]
    InvalidGamma { gamma: f64 },
    #[error("reward rules must be finite")]
    NonFiniteReward,
    #[error("unknown process kind {name:?} (expected \"sdr\" or \"sdn\")")]
    UnknownKind { name: String },
}

/// Move/stay probability pair for a stochastic row.
///
/// Single source of the split arithmetic: both builders call this, so the
/// parameterized family reproduces the table bit for bit.
fn change_split<S: Scalar>(p_change: f64) -> (S, S) {
    let move_p = S::from_f(p_change);
    (move_p, S::one() - move_p)
}

/// Builds the built-in 3-state table model for `kind` (discount 0.9).
///
/// Allowed actions: all three in `s0` and `s1`; only keep/add in `s2`.
pub fn build_table1<S: Scalar>(kind: ProcessKind) -> MdpModel<S> {
    let (add_p, remove_p) = kind.table_change_probabilities();
    let (add_move, add_stay) = change_split::<S>(add_p);
    let (remove_move, remove_stay) = change_split::<S>(remove_p);
    let one = S::one();
    let r = |x: f64| S::from_f(x);

    let mut b = MdpModel::builder(3, S::from_f(DEFAULT_GAMMA)).expect("3 states");
    b.row(0, Action::Keep, [(0, one, r(-3.0))]).expect("table row");
    b.row(0, Action::AddCore, [(0, one, r(-5.0))]).expect("table row");
    b.row(
        0,
        Action::RemoveCore,
        [(0, remove_stay, r(5.0)), (1, remove_move, r(-5.0))],
    )
    .expect("table row");
    b.row(1, Action::Keep, [(1, one, r(-1.0))]).expect("table row");
    b.row(
        1,
        Action::AddCore,
        [(0, add_move, r(5.0)), (1, add_stay, r(-5.0))],
    )
    .expect("table row");
    b.row(
        1,
        Action::RemoveCore,
        [(1, remove_stay, r(5.0)), (2, remove_move, r(-5.0))],
    )
    .expect("table row");
    b.row(2, Action::Keep, [(2, one, r(-5.0))]).expect("table row");
    b.row(
        2,
        Action::AddCore,
        [(1, add_move, r(5.0)), (2, add_stay, r(-5.0))],
    )
    .expect("table row");
    b.build()
}

/// Builds an `n_states`-state scenario model from `spec` and `rules`.
///
/// Structure, for states ordered by load level:
/// * keep self-loops deterministically everywhere;
/// * add at the lowest state self-loops deterministically (a spare core
///   cannot lower the lowest level), elsewhere it drops one level with the
///   add change probability;
/// * remove climbs one level with the remove change probability and is not
///   allowed at the highest state.
pub fn build_parameterized<S: Scalar>(
    spec: &ScenarioSpec,
    rules: &RewardRules,
) -> Result<MdpModel<S>, ScenarioError> {
    spec.check()?;
    rules.check()?;

    let n = spec.n_states;
    let (add_p, remove_p) = spec.change_probabilities();
    let (add_move, add_stay) = change_split::<S>(add_p);
    let (remove_move, remove_stay) = change_split::<S>(remove_p);
    let one = S::one();
    let good = S::from_f(rules.good_move);
    let bad = S::from_f(rules.bad_move);

    let mut b = MdpModel::builder(n, S::from_f(spec.gamma)).expect("n >= 3");
    for s in 0..n {
        let keep = S::from_f(rules.keep_reward(s, n));
        b.row(s, Action::Keep, [(s, one, keep)]).expect("fresh row");

        if s == 0 {
            b.row(s, Action::AddCore, [(s, one, bad)]).expect("fresh row");
        } else {
            b.row(s, Action::AddCore, [(s - 1, add_move, good), (s, add_stay, bad)])
                .expect("fresh row");
        }

        if s < n - 1 {
            b.row(
                s,
                Action::RemoveCore,
                [(s, remove_stay, good), (s + 1, remove_move, bad)],
            )
            .expect("fresh row");
        }
    }
    Ok(b.build())
}

/// Sweep of single-`p_change` specs for `kind`: 3 states, discount 0.9,
/// one spec per entry of the kind's sweep list.
pub fn sweep_specs(kind: ProcessKind) -> Vec<ScenarioSpec> {
    kind.sweep_probabilities()
        .iter()
        .map(|&p| ScenarioSpec::with_p_change(kind, p))
        .collect()
}
