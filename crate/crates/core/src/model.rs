//! Finite MDP representation with per-state action availability.
//!
//! States are CPU-load levels ordered by increasing load (`s0` = lowest).
//! Actions are the three core-allocation moves: keep, add one core, remove
//! one core. Transitions `P(s'|s, a)` and rewards `r(s, a, s')` are stored
//! per allowed `(s, a)` row, sorted by next-state index so that inverse-CDF
//! sampling is reproducible for a given seed.
//!
//! Construction and validation are separate on purpose: a [`ModelBuilder`]
//! will happily produce a structurally complete but semantically broken
//! model (bad row sums, rewards of `NaN`, remove-core allowed at the top
//! state), and [`MdpModel::validate`] reports every violation instead of
//! aborting on the first.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Index of a CPU-load state, 0-based, ordered by increasing load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(usize);

impl StateId {
    pub fn new(index: usize) -> Self {
        StateId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// The three core-allocation actions. On disk they are `"a0"`, `"a1"`, `"a2"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Keep the current number of cores (`a0`).
    #[serde(rename = "a0")]
    Keep,
    /// Add one core (`a1`); the load level can only drop or stay.
    #[serde(rename = "a1")]
    AddCore,
    /// Remove one core (`a2`); the load level can only rise or stay.
    #[serde(rename = "a2")]
    RemoveCore,
}

impl Action {
    /// All actions in tie-break order (`a0` < `a1` < `a2`).
    pub const ALL: [Action; 3] = [Action::Keep, Action::AddCore, Action::RemoveCore];

    pub fn index(self) -> usize {
        match self {
            Action::Keep => 0,
            Action::AddCore => 1,
            Action::RemoveCore => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Keep => "a0",
            Action::AddCore => "a1",
            Action::RemoveCore => "a2",
        }
    }

    /// Signed change in allocated cores when this action is taken.
    pub fn core_delta(self) -> i64 {
        match self {
            Action::Keep => 0,
            Action::AddCore => 1,
            Action::RemoveCore => -1,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Action {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a0" => Ok(Action::Keep),
            "a1" => Ok(Action::AddCore),
            "a2" => Ok(Action::RemoveCore),
            other => Err(ModelError::UnknownAction {
                name: other.to_string(),
            }),
        }
    }
}

/// One possible result of taking an action: next state, its probability,
/// and the reward collected on that transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome<S> {
    pub next: StateId,
    pub probability: S,
    pub reward: S,
}

/// Errors from model construction and primitive queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model must have at least one state")]
    NoStates,
    #[error("state index {index} out of range for a {n_states}-state model")]
    StateOutOfRange { index: usize, n_states: usize },
    #[error("duplicate transition row for ({state}, {action})")]
    DuplicateRow { state: StateId, action: Action },
    #[error("duplicate next state {next} in row ({state}, {action})")]
    DuplicateOutcome {
        state: StateId,
        action: Action,
        next: StateId,
    },
    #[error("empty transition row for ({state}, {action})")]
    EmptyRow { state: StateId, action: Action },
    #[error("zero-probability transition ({state}, {action}) -> {next}; impossible transitions must be omitted")]
    ZeroProbability {
        state: StateId,
        action: Action,
        next: StateId,
    },
    #[error("non-finite probability {probability} in row ({state}, {action})")]
    NonFiniteProbability {
        state: StateId,
        action: Action,
        probability: f64,
    },
    #[error("action {action} is not allowed in state {state}")]
    DisallowedAction { state: StateId, action: Action },
    #[error("unknown action name {name:?} (expected \"a0\", \"a1\", or \"a2\")")]
    UnknownAction { name: String },
}

/// A single violated model invariant, with coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSumMismatch {
        state: StateId,
        action: Action,
        sum: f64,
    },
    ProbabilityOutOfRange {
        state: StateId,
        action: Action,
        next: StateId,
        probability: f64,
    },
    NonFiniteReward {
        state: StateId,
        action: Action,
        next: StateId,
    },
    NoAllowedActions {
        state: StateId,
    },
    RemoveCoreAtHighest {
        state: StateId,
    },
    GammaOutOfRange {
        gamma: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSumMismatch { state, action, sum } => {
                write!(f, "row sum != 1 at ({state}, {action}): got {sum}")
            }
            Violation::ProbabilityOutOfRange {
                state,
                action,
                next,
                probability,
            } => write!(
                f,
                "probability outside [0, 1] at ({state}, {action}) -> {next}: got {probability}"
            ),
            Violation::NonFiniteReward {
                state,
                action,
                next,
            } => write!(f, "non-finite reward at ({state}, {action}) -> {next}"),
            Violation::NoAllowedActions { state } => {
                write!(f, "state {state} has no allowed action")
            }
            Violation::RemoveCoreAtHighest { state } => {
                write!(f, "RemoveCore allowed at highest state {state}")
            }
            Violation::GammaOutOfRange { gamma } => {
                write!(f, "discount factor outside (0, 1): got {gamma}")
            }
        }
    }
}

/// Outcome of [`MdpModel::validate`]: empty means the model is sound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            f.write_str("ok")
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

type ActionRows<S> = [Option<Vec<Outcome<S>>>; 3];

/// A finite MDP: states, per-state allowed actions, transition
/// probabilities, rewards, and a discount factor.
///
/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel<S> {
    n_states: usize,
    gamma: S,
    rows: Vec<ActionRows<S>>,
}

/// Incremental [`MdpModel`] constructor.
pub struct ModelBuilder<S> {
    n_states: usize,
    gamma: S,
    rows: Vec<ActionRows<S>>,
}

impl<S: Scalar> ModelBuilder<S> {
    fn new(n_states: usize, gamma: S) -> Result<Self, ModelError> {
        if n_states == 0 {
            return Err(ModelError::NoStates);
        }
        Ok(ModelBuilder {
            n_states,
            gamma,
            rows: vec![[None, None, None]; n_states],
        })
    }

    fn check_state(&self, index: usize) -> Result<StateId, ModelError> {
        if index < self.n_states {
            Ok(StateId(index))
        } else {
            Err(ModelError::StateOutOfRange {
                index,
                n_states: self.n_states,
            })
        }
    }

    /// Declares `action` allowed in state `state` with the given
    /// `(next_state, probability, reward)` outcomes.
    ///
    /// Outcomes are stored sorted by next-state index. Probabilities must be
    /// finite and nonzero but are otherwise unchecked here; semantic
    /// problems (bad row sums, out-of-range probabilities, non-finite
    /// rewards) are reported by [`MdpModel::validate`].
    pub fn row<I>(&mut self, state: usize, action: Action, outcomes: I) -> Result<&mut Self, ModelError>
    where
        I: IntoIterator<Item = (usize, S, S)>,
    {
        let state = self.check_state(state)?;
        let slot = action.index();
        if self.rows[state.index()][slot].is_some() {
            return Err(ModelError::DuplicateRow { state, action });
        }

        let mut row = Vec::new();
        for (next, probability, reward) in outcomes {
            let next = self.check_state(next)?;
            if !probability.to_f().is_finite() {
                return Err(ModelError::NonFiniteProbability {
                    state,
                    action,
                    probability: probability.to_f(),
                });
            }
            if probability == S::zero() {
                return Err(ModelError::ZeroProbability {
                    state,
                    action,
                    next,
                });
            }
            row.push(Outcome {
                next,
                probability,
                reward,
            });
        }
        if row.is_empty() {
            return Err(ModelError::EmptyRow { state, action });
        }
        row.sort_by_key(|o| o.next);
        for pair in row.windows(2) {
            if pair[0].next == pair[1].next {
                return Err(ModelError::DuplicateOutcome {
                    state,
                    action,
                    next: pair[0].next,
                });
            }
        }

        self.rows[state.index()][slot] = Some(row);
        Ok(self)
    }

    /// Finishes construction. No semantic validation happens here; call
    /// [`MdpModel::validate`] for the full invariant report.
    pub fn build(self) -> MdpModel<S> {
        MdpModel {
            n_states: self.n_states,
            gamma: self.gamma,
            rows: self.rows,
        }
    }
}

impl<S: Scalar> MdpModel<S> {
    /// Starts building a model with `n_states` states and discount `gamma`.
    pub fn builder(n_states: usize, gamma: S) -> Result<ModelBuilder<S>, ModelError> {
        ModelBuilder::new(n_states, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    /// Highest-load state (`n_states - 1`).
    pub fn highest_state(&self) -> StateId {
        StateId(self.n_states - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n_states).map(StateId)
    }

    pub fn contains(&self, state: StateId) -> bool {
        state.index() < self.n_states
    }

    pub fn is_allowed(&self, state: StateId, action: Action) -> bool {
        self.contains(state) && self.rows[state.index()][action.index()].is_some()
    }

    /// Actions allowed in `state`, in `a0 < a1 < a2` order.
    pub fn allowed(&self, state: StateId) -> impl Iterator<Item = Action> + '_ {
        Action::ALL
            .into_iter()
            .filter(move |a| self.is_allowed(state, *a))
    }

    /// Transition outcomes for an allowed `(state, action)` pair, sorted by
    /// next-state index.
    pub fn outcomes(&self, state: StateId, action: Action) -> Result<&[Outcome<S>], ModelError> {
        if !self.contains(state) {
            return Err(ModelError::StateOutOfRange {
                index: state.index(),
                n_states: self.n_states,
            });
        }
        self.rows[state.index()][action.index()]
            .as_deref()
            .ok_or(ModelError::DisallowedAction { state, action })
    }

    /// Expected immediate reward `sum_{s'} P(s'|s,a) * r(s,a,s')`.
    pub fn expected_reward(&self, state: StateId, action: Action) -> Result<S, ModelError> {
        let outcomes = self.outcomes(state, action)?;
        Ok(outcomes
            .iter()
            .map(|o| o.probability * o.reward)
            .fold(S::zero(), |acc, x| acc + x))
    }

    /// Draws a next state from `P(.|s,a)` by inverse CDF over states in
    /// ascending index order, and returns it with the transition reward.
    ///
    /// The uniform variate is always drawn as `f64`, so a given seed
    /// produces the same state sequence for `f32` and `f64` models built
    /// from the same data.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        state: StateId,
        action: Action,
        rng: &mut R,
    ) -> Result<(StateId, S), ModelError> {
        let outcomes = self.outcomes(state, action)?;
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        for outcome in outcomes {
            cumulative += outcome.probability.to_f();
            if u < cumulative {
                return Ok((outcome.next, outcome.reward));
            }
        }
        // Row sums can fall a hair short of 1; the draw then lands on the
        // last outcome.
        let last = outcomes.last().expect("rows are never empty");
        Ok((last.next, last.reward))
    }

    /// Largest `|r(s,a,s')|` over all stored transitions.
    pub fn max_abs_reward(&self) -> S {
        let mut max = S::zero();
        for actions in &self.rows {
            for row in actions.iter().flatten() {
                for outcome in row {
                    max = max.max(outcome.reward.abs());
                }
            }
        }
        max
    }

    /// Checks every model invariant and reports all violations.
    ///
    /// Never fails: a broken model yields a report, not an error.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let gamma = self.gamma.to_f();
        if !(gamma > 0.0 && gamma < 1.0) {
            violations.push(Violation::GammaOutOfRange { gamma });
        }

        for state in self.states() {
            if self.allowed(state).next().is_none() {
                violations.push(Violation::NoAllowedActions { state });
            }
            for action in self.allowed(state) {
                let row = self.rows[state.index()][action.index()]
                    .as_deref()
                    .expect("allowed implies row");
                let mut sum = S::zero();
                for outcome in row {
                    sum += outcome.probability;
                    let p = outcome.probability.to_f();
                    if !(0.0..=1.0).contains(&p) {
                        violations.push(Violation::ProbabilityOutOfRange {
                            state,
                            action,
                            next: outcome.next,
                            probability: p,
                        });
                    }
                    if !outcome.reward.to_f().is_finite() {
                        violations.push(Violation::NonFiniteReward {
                            state,
                            action,
                            next: outcome.next,
                        });
                    }
                }
                if (sum - S::one()).abs() > S::row_sum_tolerance() {
                    violations.push(Violation::RowSumMismatch {
                        state,
                        action,
                        sum: sum.to_f(),
                    });
                }
            }
        }

        if self.is_allowed(self.highest_state(), Action::RemoveCore) {
            violations.push(Violation::RemoveCoreAtHighest {
                state: self.highest_state(),
            });
        }

        ValidationReport { violations }
    }
}

/// Per-state values, indexable by [`StateId`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector<S>(Vec<S>);

impl<S: Scalar> ValueVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        ValueVector(values)
    }

    pub fn zeros(n_states: usize) -> Self {
        ValueVector(vec![S::zero(); n_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, state: StateId) -> S {
        self.0[state.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = S> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    /// Max-norm distance `max_s |self(s) - other(s)|`.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }

    pub fn max_abs(&self) -> S {
        self.0.iter().map(|v| v.abs()).fold(S::zero(), S::max)
    }
}

impl<S: Scalar> std::ops::Index<StateId> for ValueVector<S> {
    type Output = S;

    fn index(&self, state: StateId) -> &S {
        &self.0[state.index()]
    }
}

/// Deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(Vec<Action>);

impl Policy {
    pub fn new(actions: Vec<Action>) -> Self {
        Policy(actions)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn action(&self, state: StateId) -> Action {
        self.0[state.index()]
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    /// Checks that the policy covers every state of `model` with an allowed
    /// action.
    pub fn check_for_model<S: Scalar>(&self, model: &MdpModel<S>) -> Result<(), ModelError> {
        if self.len() != model.n_states() {
            return Err(ModelError::StateOutOfRange {
                index: self.len().saturating_sub(1),
                n_states: model.n_states(),
            });
        }
        for state in model.states() {
            let action = self.action(state);
            if !model.is_allowed(state, action) {
                return Err(ModelError::DisallowedAction { state, action });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, action) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "s{i}: {action}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn self_loop_model(reward: f64) -> MdpModel<f64> {
        let mut b = MdpModel::builder(1, 0.9).unwrap();
        b.row(0, Action::Keep, [(0, 1.0, reward)]).unwrap();
        b.build()
    }

    #[test]
    fn builder_rejects_structural_errors() {
        assert_eq!(
            MdpModel::<f64>::builder(0, 0.9).err(),
            Some(ModelError::NoStates)
        );

        let mut b = MdpModel::builder(2, 0.9).unwrap();
        assert!(matches!(
            b.row(0, Action::Keep, [(5, 1.0, 0.0)]),
            Err(ModelError::StateOutOfRange { index: 5, .. })
        ));
        b.row(0, Action::Keep, [(0, 1.0, 0.0)]).unwrap();
        assert!(matches!(
            b.row(0, Action::Keep, [(0, 1.0, 0.0)]),
            Err(ModelError::DuplicateRow { .. })
        ));
        assert!(matches!(
            b.row(1, Action::Keep, [(0, 0.5, 0.0), (0, 0.5, 0.0)]),
            Err(ModelError::DuplicateOutcome { .. })
        ));
        assert!(matches!(
            b.row(1, Action::Keep, std::iter::empty()),
            Err(ModelError::EmptyRow { .. })
        ));
        assert!(matches!(
            b.row(1, Action::Keep, [(0, 0.0, 0.0), (1, 1.0, 0.0)]),
            Err(ModelError::ZeroProbability { .. })
        ));
        assert!(matches!(
            b.row(1, Action::Keep, [(0, f64::NAN, 0.0)]),
            Err(ModelError::NonFiniteProbability { .. })
        ));
    }

    #[test]
    fn validate_reports_row_sum_violation() {
        let mut b = MdpModel::builder(2, 0.9).unwrap();
        b.row(0, Action::Keep, [(0, 0.5, 1.0), (1, 0.4, 1.0)]).unwrap();
        b.row(1, Action::Keep, [(1, 1.0, 1.0)]).unwrap();
        let report = b.build().validate();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::RowSumMismatch { state: StateId(0), action: Action::Keep, .. }
        ));
    }

    #[test]
    fn validate_reports_remove_core_at_highest() {
        let mut b = MdpModel::builder(2, 0.9).unwrap();
        b.row(0, Action::Keep, [(0, 1.0, -1.0)]).unwrap();
        b.row(1, Action::Keep, [(1, 1.0, -1.0)]).unwrap();
        b.row(1, Action::RemoveCore, [(1, 1.0, 5.0)]).unwrap();
        let report = b.build().validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RemoveCoreAtHighest { state: StateId(1) })));
    }

    #[test]
    fn validate_reports_probability_and_reward_problems() {
        let mut b = MdpModel::builder(2, 0.9).unwrap();
        b.row(0, Action::Keep, [(0, 1.2, 1.0), (1, -0.2, f64::INFINITY)])
            .unwrap();
        b.row(1, Action::Keep, [(1, 1.0, 1.0)]).unwrap();
        let report = b.build().validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ProbabilityOutOfRange { probability, .. } if *probability > 1.0)));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ProbabilityOutOfRange { probability, .. } if *probability < 0.0)));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonFiniteReward { .. })));
    }

    #[test]
    fn validate_reports_gamma_and_missing_actions() {
        let b = MdpModel::<f64>::builder(1, 1.5).unwrap();
        let report = b.build().validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::GammaOutOfRange { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NoAllowedActions { .. })));
    }

    #[test]
    fn expected_reward_of_self_loop() {
        let model = self_loop_model(-3.0);
        assert_eq!(
            model.expected_reward(StateId(0), Action::Keep).unwrap(),
            -3.0
        );
    }

    #[test]
    fn expected_reward_rejects_disallowed_action() {
        let model = self_loop_model(-3.0);
        assert_eq!(
            model.expected_reward(StateId(0), Action::AddCore),
            Err(ModelError::DisallowedAction {
                state: StateId(0),
                action: Action::AddCore,
            })
        );
    }

    #[test]
    fn sampling_degenerate_distribution_is_constant() {
        let model = self_loop_model(-3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (next, reward) = model
                .sample_transition(StateId(0), Action::Keep, &mut rng)
                .unwrap();
            assert_eq!(next, StateId(0));
            assert_eq!(reward, -3.0);
        }
    }

    #[test]
    fn sampling_is_bit_reproducible_per_seed() {
        let mut b = MdpModel::builder(3, 0.9).unwrap();
        b.row(1, Action::AddCore, [(0, 0.8, 5.0), (1, 0.2, -5.0)])
            .unwrap();
        let model = b.build();

        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|_| {
                    model
                        .sample_transition(StateId(1), Action::AddCore, &mut rng)
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(99), draw(99));
        assert_ne!(draw(99), draw(100));
    }

    #[test]
    fn action_labels_round_trip() {
        for action in Action::ALL {
            assert_eq!(action.label().parse::<Action>().unwrap(), action);
        }
        assert!(matches!(
            "a3".parse::<Action>(),
            Err(ModelError::UnknownAction { .. })
        ));
    }
}
