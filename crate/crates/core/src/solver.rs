//! Exact solvers for finite discounted MDPs.
//!
//! The workhorse is [`value_iteration`]: Jacobi sweeps of the Bellman
//! optimality backup
//!
//! ```text
//! V_{j+1}(s) = max_a sum_{s'} P(s'|s,a) * (r(s,a,s') + gamma * V_j(s'))
//! ```
//!
//! starting from `V_0 = 0`, stopping when the largest per-state change in a
//! full sweep drops below `epsilon`.
//!
//! Two independent verification routes live alongside it:
//! [`policy_value_exact`] evaluates a fixed policy by directly solving the
//! linear system `(I - gamma * P_pi) V = R_pi`, and [`brute_force_optimal`]
//! enumerates every deterministic stationary policy and picks the one whose
//! exact value dominates componentwise. Neither shares code with the
//! iterative path beyond the model itself.

use thiserror::Error;

use crate::model::{Action, MdpModel, ModelError, Policy, StateId, ValueVector};
use crate::scalar::Scalar;

/// Ceiling on `prod_s |allowed(s)|` for policy enumeration.
const MAX_ENUMERABLE_POLICIES: u128 = 1_000_000;

/// Errors from the solver operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("convergence threshold must be positive, got {epsilon}")]
    InvalidEpsilon { epsilon: f64 },
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("singular linear system while evaluating a policy")]
    SingularSystem,
    #[error("policy space too large to enumerate: {policies} > {MAX_ENUMERABLE_POLICIES}")]
    PolicySpaceTooLarge { policies: u128 },
    #[error("no policy dominates componentwise; model is likely malformed")]
    NoDominantPolicy,
    #[error("state {state} allows no action")]
    NoAllowedActions { state: StateId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Action values `Q(s, a)`, defined exactly on the allowed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<S> {
    values: Vec<[Option<S>; 3]>,
}

impl<S: Scalar> QTable<S> {
    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, state: StateId, action: Action) -> Option<S> {
        self.values[state.index()][action.index()]
    }

    /// Best allowed action and its value; ties go to the lowest action
    /// index (`a0 < a1 < a2`). `None` if the state allows nothing.
    pub fn best(&self, state: StateId) -> Option<(Action, S)> {
        let mut best: Option<(Action, S)> = None;
        for action in Action::ALL {
            if let Some(q) = self.get(state, action) {
                match best {
                    Some((_, current)) if q <= current => {}
                    _ => best = Some((action, q)),
                }
            }
        }
        best
    }
}

/// Everything [`value_iteration`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<S> {
    /// Final value vector (the `V*` estimate).
    pub optimal_values: ValueVector<S>,
    /// Greedy policy of the final values.
    pub policy: Policy,
    /// `V_0, V_1, ..., V_iterations`; entry 0 is all zeros.
    pub history: Vec<ValueVector<S>>,
    /// Completed sweeps.
    pub iterations: usize,
    /// Whether the max-norm change fell below `epsilon` within `max_iter`.
    pub converged: bool,
    /// Threshold the run used.
    pub epsilon: S,
}

/// Computes `Q(s,a) = sum_{s'} P(s'|s,a) * (r(s,a,s') + gamma * v(s'))` for
/// every allowed pair.
///
/// Panics if `v` has the wrong length.
pub fn q_values<S: Scalar>(model: &MdpModel<S>, v: &ValueVector<S>) -> QTable<S> {
    assert_eq!(
        v.len(),
        model.n_states(),
        "value vector length must equal the state count"
    );
    let gamma = model.gamma();
    let mut values = vec![[None, None, None]; model.n_states()];
    for state in model.states() {
        for action in model.allowed(state) {
            let outcomes = model.outcomes(state, action).expect("allowed pair");
            let q = outcomes
                .iter()
                .map(|o| o.probability * (o.reward + gamma * v.get(o.next)))
                .fold(S::zero(), |acc, x| acc + x);
            values[state.index()][action.index()] = Some(q);
        }
    }
    QTable { values }
}

/// Greedy policy with respect to `v`: per-state argmax of [`q_values`],
/// ties broken by lowest action index.
///
/// Panics if some state allows no action (an invalid model; see
/// [`MdpModel::validate`]).
pub fn greedy_policy<S: Scalar>(model: &MdpModel<S>, v: &ValueVector<S>) -> Policy {
    let q = q_values(model, v);
    let actions = model
        .states()
        .map(|s| {
            q.best(s)
                .expect("every state must allow at least one action")
                .0
        })
        .collect();
    Policy::new(actions)
}

/// Runs value iteration from `V_0 = 0` until the max-norm sweep change
/// drops below `epsilon` or `max_iter` sweeps complete.
///
/// Non-convergence is not an error: the result comes back with
/// `converged = false` and the full history.
pub fn value_iteration<S: Scalar>(
    model: &MdpModel<S>,
    epsilon: S,
    max_iter: usize,
) -> Result<SolveResult<S>, SolverError> {
    if !(epsilon > S::zero()) || !epsilon.to_f().is_finite() {
        return Err(SolverError::InvalidEpsilon {
            epsilon: epsilon.to_f(),
        });
    }
    if max_iter == 0 {
        return Err(SolverError::InvalidMaxIter);
    }

    let mut history = vec![ValueVector::zeros(model.n_states())];
    let mut converged = false;
    for _ in 0..max_iter {
        let current = history.last().expect("history starts non-empty");
        let q = q_values(model, current);
        let swept = ValueVector::new(
            model
                .states()
                .map(|s| {
                    q.best(s)
                        .expect("every state must allow at least one action")
                        .1
                })
                .collect(),
        );
        let delta = swept.max_abs_diff(current);
        history.push(swept);
        if delta < epsilon {
            converged = true;
            break;
        }
    }

    let optimal_values = history.last().expect("non-empty").clone();
    let policy = greedy_policy(model, &optimal_values);
    Ok(SolveResult {
        optimal_values,
        policy,
        iterations: history.len() - 1,
        converged,
        epsilon,
        history,
    })
}

/// Evaluates a fixed policy exactly by solving `(I - gamma * P_pi) V = R_pi`
/// with Gaussian elimination (partial pivoting, `n_states` unknowns).
pub fn policy_value_exact<S: Scalar>(
    model: &MdpModel<S>,
    policy: &Policy,
) -> Result<ValueVector<S>, SolverError> {
    policy.check_for_model(model)?;
    let n = model.n_states();
    let gamma = model.gamma();

    // Row-major augmented system [A | b].
    let mut a = vec![S::zero(); n * n];
    let mut b = vec![S::zero(); n];
    for state in model.states() {
        let i = state.index();
        a[i * n + i] = S::one();
        let action = policy.action(state);
        for outcome in model.outcomes(state, action).expect("checked above") {
            let j = outcome.next.index();
            a[i * n + j] = a[i * n + j] - gamma * outcome.probability;
            b[i] += outcome.probability * outcome.reward;
        }
    }

    gaussian_solve(&mut a, &mut b, n)?;
    Ok(ValueVector::new(b))
}

/// In-place Gaussian elimination with partial pivoting; solution lands in `b`.
fn gaussian_solve<S: Scalar>(a: &mut [S], b: &mut [S], n: usize) -> Result<(), SolverError> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .expect("matrix entries are finite")
            })
            .expect("non-empty column");
        if a[pivot_row * n + col].abs() < S::epsilon() {
            return Err(SolverError::SingularSystem);
        }
        if pivot_row != col {
            for k in col..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        for row in (col + 1)..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == S::zero() {
                continue;
            }
            for k in col..n {
                let update = factor * a[col * n + k];
                a[row * n + k] = a[row * n + k] - update;
            }
            let update = factor * b[col];
            b[row] = b[row] - update;
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in (col + 1)..n {
            sum = sum - a[col * n + k] * b[k];
        }
        b[col] = sum / a[col * n + col];
    }
    Ok(())
}

/// All deterministic stationary policies of `model`, in lexicographic order
/// by (state index, action index).
pub fn enumerate_policies<S: Scalar>(model: &MdpModel<S>) -> Result<Vec<Policy>, SolverError> {
    let counts: Vec<Vec<Action>> = model
        .states()
        .map(|s| model.allowed(s).collect())
        .collect();
    let mut total: u128 = 1;
    for (index, options) in counts.iter().enumerate() {
        if options.is_empty() {
            return Err(SolverError::NoAllowedActions {
                state: StateId::new(index),
            });
        }
        total = total.saturating_mul(options.len() as u128);
        if total > MAX_ENUMERABLE_POLICIES {
            return Err(SolverError::PolicySpaceTooLarge { policies: total });
        }
    }

    let mut policies = Vec::with_capacity(total as usize);
    let mut odometer = vec![0usize; counts.len()];
    loop {
        policies.push(Policy::new(
            odometer
                .iter()
                .zip(&counts)
                .map(|(&i, options)| options[i])
                .collect(),
        ));
        let mut pos = counts.len();
        loop {
            if pos == 0 {
                return Ok(policies);
            }
            pos -= 1;
            odometer[pos] += 1;
            if odometer[pos] < counts[pos].len() {
                break;
            }
            odometer[pos] = 0;
        }
    }
}

/// Finds the optimal policy by exhaustive enumeration: evaluates every
/// deterministic stationary policy with [`policy_value_exact`] and returns
/// the one whose value dominates every other componentwise.
///
/// For a finite discounted MDP such a simultaneous maximizer always exists;
/// if floating-point noise aside none is found, the model is malformed and
/// an error is returned. Among equal-valued maximizers the lexicographically
/// smallest policy wins.
pub fn brute_force_optimal<S: Scalar>(
    model: &MdpModel<S>,
) -> Result<(Policy, ValueVector<S>), SolverError> {
    let policies = enumerate_policies(model)?;

    let n = model.n_states();
    let mut component_max = vec![S::neg_infinity(); n];
    for policy in &policies {
        let values = policy_value_exact(model, policy)?;
        for (slot, v) in component_max.iter_mut().zip(values.iter()) {
            *slot = slot.max(v);
        }
    }

    let scale = component_max
        .iter()
        .map(|v| v.abs())
        .fold(S::one(), S::max);
    let tolerance = S::epsilon().sqrt() * scale;

    for policy in &policies {
        let values = policy_value_exact(model, policy)?;
        let dominates = component_max
            .iter()
            .zip(values.iter())
            .all(|(&m, v)| v >= m - tolerance);
        if dominates {
            return Ok((policy.clone(), values));
        }
    }
    Err(SolverError::NoDominantPolicy)
}
