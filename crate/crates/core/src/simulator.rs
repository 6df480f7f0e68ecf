//! Trajectory simulation and Monte Carlo policy evaluation.
//!
//! A trajectory repeatedly asks an [`Agent`] for an action, samples the
//! model transition, and accumulates the discounted total
//! `sum_i gamma^(i-1) * r_i` alongside the raw (undiscounted) sum, the net
//! core delta, and per-state visit counts.
//!
//! Determinism contract: a trajectory is a pure function of
//! `(model, agent, steps, init, seed)`. The environment and the agent draw
//! from two separate ChaCha8 streams of the same seed, so a fixed-policy
//! run and a random-agent run with equal seeds see identical environment
//! randomness. Monte Carlo batches derive per-run seeds from the master
//! seed with [`run_seed`] and may execute runs in any order or in parallel
//! without changing the aggregate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, MdpModel, ModelError, Policy, StateId, ValueVector};
use crate::scalar::Scalar;

/// ChaCha stream id consumed by the environment (transition sampling).
const ENV_STREAM: u64 = 0;

/// ChaCha stream id consumed by the agent (RAS coin flips).
const AGENT_STREAM: u64 = 1;

/// Weyl increment of SplitMix64.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` in a batch with the given master seed: the
/// SplitMix64 output stream seeded at `master_seed`, read at position
/// `run_index`. O(1) random access keeps runs order-independent.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64_mix(master_seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Errors from simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("a trajectory needs at least one step")]
    ZeroSteps,
    #[error("a batch needs at least one run")]
    ZeroRuns,
    #[error("initial state s{index} out of range for a {n_states}-state model")]
    InitStateOutOfRange { index: usize, n_states: usize },
    #[error("value standard deviation needs at least 2 states, got {n_states}")]
    TooFewStates { n_states: usize },
    #[error("energy model fields must be positive and finite")]
    InvalidEnergyModel,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Decision maker driving a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    /// Plays a fixed deterministic policy; consumes no randomness.
    FixedPolicy(Policy),
    /// Random action selection: removes a core at the lowest state, adds
    /// one at the highest, and flips a fair coin between add and remove at
    /// every intermediate state. Never keeps.
    Ras,
}

impl Agent {
    /// Picks the action for `state`. Only [`Agent::Ras`] draws from `rng`.
    pub fn select<S: Scalar, R: Rng + ?Sized>(
        &self,
        model: &MdpModel<S>,
        state: StateId,
        rng: &mut R,
    ) -> Action {
        match self {
            Agent::FixedPolicy(policy) => policy.action(state),
            Agent::Ras => {
                if state == model.highest_state() {
                    Action::AddCore
                } else if state.index() == 0 {
                    Action::RemoveCore
                } else if rng.gen_bool(0.5) {
                    Action::AddCore
                } else {
                    Action::RemoveCore
                }
            }
        }
    }
}

/// One point of the optional cumulative-reward series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint<S> {
    pub step: u64,
    pub cumulative_raw: S,
    pub cumulative_discounted: S,
}

/// Everything a single trajectory accumulates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats<S> {
    pub steps: u64,
    /// `sum_i gamma^(i-1) * r_i`.
    pub discounted_reward: S,
    /// Undiscounted reward sum, for long-horizon views.
    pub raw_reward: S,
    /// Cores added minus cores removed.
    pub net_core_delta: i64,
    /// Visit counts; a step counts for the state the action was chosen in.
    pub time_in_state: Vec<u64>,
    /// Per-step cumulative series, when requested.
    pub reward_curve: Option<Vec<CurvePoint<S>>>,
}

impl<S: Scalar> TrajectoryStats<S> {
    /// Fraction of steps spent in `state`.
    pub fn frac_in_state(&self, state: StateId) -> S {
        S::from_f(self.time_in_state[state.index()] as f64 / self.steps as f64)
    }

    /// Fraction of steps spent in the highest-load state.
    pub fn frac_highest(&self) -> S {
        S::from_f(
            *self.time_in_state.last().expect("at least one state") as f64 / self.steps as f64,
        )
    }
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat<S> {
    pub mean: S,
    pub std_dev: S,
}

/// Monte Carlo aggregates over independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats<S> {
    pub runs: u64,
    pub discounted_reward: SummaryStat<S>,
    pub raw_reward: SummaryStat<S>,
    pub net_core_delta: SummaryStat<S>,
    /// Fraction of time in the highest-load state.
    pub frac_highest: SummaryStat<S>,
}

/// Power draw assumed when converting core savings into energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct EnergyModel<S> {
    #[serde(default = "default_watts_per_core")]
    pub watts_per_core: S,
    #[serde(default = "default_hours")]
    pub hours: S,
}

fn default_watts_per_core<S: Scalar>() -> S {
    S::from_f(80.0)
}

fn default_hours<S: Scalar>() -> S {
    S::from_f(24.0)
}

impl<S: Scalar> Default for EnergyModel<S> {
    fn default() -> Self {
        EnergyModel {
            watts_per_core: default_watts_per_core(),
            hours: default_hours(),
        }
    }
}

impl<S: Scalar> EnergyModel<S> {
    pub fn new(watts_per_core: S, hours: S) -> Result<Self, SimError> {
        let model = EnergyModel {
            watts_per_core,
            hours,
        };
        model.check()?;
        Ok(model)
    }

    pub fn check(&self) -> Result<(), SimError> {
        let w = self.watts_per_core.to_f();
        let h = self.hours.to_f();
        if w > 0.0 && w.is_finite() && h > 0.0 && h.is_finite() {
            Ok(())
        } else {
            Err(SimError::InvalidEnergyModel)
        }
    }
}

/// kWh per day saved by running `core_difference` fewer cores.
pub fn energy_savings<S: Scalar>(core_difference: S, model: &EnergyModel<S>) -> S {
    core_difference * model.watts_per_core * model.hours / S::from_f(1000.0)
}

/// Population standard deviation of the value entries across states.
pub fn value_stddev<S: Scalar>(v: &ValueVector<S>) -> Result<S, SimError> {
    let n = v.len();
    if n < 2 {
        return Err(SimError::TooFewStates { n_states: n });
    }
    let count = S::from_f(n as f64);
    let mean = v.iter().sum::<S>() / count;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<S>() / count;
    Ok(var.sqrt())
}

fn run_trajectory<S: Scalar>(
    model: &MdpModel<S>,
    agent: &Agent,
    steps: u64,
    init: StateId,
    seed: u64,
    record_curve: bool,
) -> Result<TrajectoryStats<S>, SimError> {
    if steps == 0 {
        return Err(SimError::ZeroSteps);
    }
    if !model.contains(init) {
        return Err(SimError::InitStateOutOfRange {
            index: init.index(),
            n_states: model.n_states(),
        });
    }
    if let Agent::FixedPolicy(policy) = agent {
        policy.check_for_model(model)?;
    }

    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(ENV_STREAM);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
    agent_rng.set_stream(AGENT_STREAM);

    let gamma = model.gamma();
    let mut state = init;
    let mut discounted = S::zero();
    let mut raw = S::zero();
    let mut gamma_pow = S::one();
    let mut net_core_delta = 0i64;
    let mut time_in_state = vec![0u64; model.n_states()];
    let mut curve = record_curve.then(|| Vec::with_capacity(steps as usize));

    for step in 1..=steps {
        let action = agent.select(model, state, &mut agent_rng);
        time_in_state[state.index()] += 1;
        net_core_delta += action.core_delta();
        let (next, reward) = model.sample_transition(state, action, &mut env_rng)?;
        discounted += gamma_pow * reward;
        raw += reward;
        gamma_pow = gamma_pow * gamma;
        if let Some(curve) = curve.as_mut() {
            curve.push(CurvePoint {
                step,
                cumulative_raw: raw,
                cumulative_discounted: discounted,
            });
        }
        state = next;
    }

    Ok(TrajectoryStats {
        steps,
        discounted_reward: discounted,
        raw_reward: raw,
        net_core_delta,
        time_in_state,
        reward_curve: curve,
    })
}

/// Runs one trajectory. Deterministic in `(model, agent, steps, init, seed)`.
pub fn simulate<S: Scalar>(
    model: &MdpModel<S>,
    agent: &Agent,
    steps: u64,
    init: StateId,
    seed: u64,
) -> Result<TrajectoryStats<S>, SimError> {
    run_trajectory(model, agent, steps, init, seed, false)
}

/// Like [`simulate`], additionally recording the per-step cumulative series.
pub fn simulate_with_curve<S: Scalar>(
    model: &MdpModel<S>,
    agent: &Agent,
    steps: u64,
    init: StateId,
    seed: u64,
) -> Result<TrajectoryStats<S>, SimError> {
    run_trajectory(model, agent, steps, init, seed, true)
}

/// Runs `runs` independent trajectories with seeds derived from
/// `master_seed`, returned in run order.
pub fn run_trajectories<S: Scalar>(
    model: &MdpModel<S>,
    agent: &Agent,
    runs: u64,
    steps: u64,
    init: StateId,
    master_seed: u64,
) -> Result<Vec<TrajectoryStats<S>>, SimError> {
    if runs == 0 {
        return Err(SimError::ZeroRuns);
    }
    let results: Vec<Result<TrajectoryStats<S>, SimError>> = (0..runs)
        .into_par_iter()
        .map(|run| simulate(model, agent, steps, init, run_seed(master_seed, run)))
        .collect();
    results.into_iter().collect()
}

fn summarize<S: Scalar>(values: &[S]) -> SummaryStat<S> {
    let n = values.len();
    let count = S::from_f(n as f64);
    let mean = values.iter().copied().sum::<S>() / count;
    let std_dev = if n < 2 {
        S::zero()
    } else {
        let var = values
            .iter()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<S>()
            / S::from_f((n - 1) as f64);
        var.sqrt()
    };
    SummaryStat { mean, std_dev }
}

/// Aggregates per-run statistics; run order does not matter.
pub fn aggregate<S: Scalar>(stats: &[TrajectoryStats<S>]) -> Result<AggregateStats<S>, SimError> {
    if stats.is_empty() {
        return Err(SimError::ZeroRuns);
    }
    let discounted: Vec<S> = stats.iter().map(|t| t.discounted_reward).collect();
    let raw: Vec<S> = stats.iter().map(|t| t.raw_reward).collect();
    let delta: Vec<S> = stats
        .iter()
        .map(|t| S::from_f(t.net_core_delta as f64))
        .collect();
    let frac: Vec<S> = stats.iter().map(|t| t.frac_highest()).collect();
    Ok(AggregateStats {
        runs: stats.len() as u64,
        discounted_reward: summarize(&discounted),
        raw_reward: summarize(&raw),
        net_core_delta: summarize(&delta),
        frac_highest: summarize(&frac),
    })
}

/// Monte Carlo evaluation: `runs` independent trajectories aggregated into
/// means and sample standard deviations.
pub fn monte_carlo<S: Scalar>(
    model: &MdpModel<S>,
    agent: &Agent,
    runs: u64,
    steps: u64,
    init: StateId,
    master_seed: u64,
) -> Result<AggregateStats<S>, SimError> {
    aggregate(&run_trajectories(model, agent, runs, steps, init, master_seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MdpModel;

    fn keeper_model(reward: f64) -> MdpModel<f64> {
        let mut b = MdpModel::builder(1, 0.9).unwrap();
        b.row(0, Action::Keep, [(0, 1.0, reward)]).unwrap();
        b.build()
    }

    #[test]
    fn three_step_discounted_partial_sum() {
        let model = keeper_model(1.0);
        let agent = Agent::FixedPolicy(Policy::new(vec![Action::Keep]));
        let stats = simulate(&model, &agent, 3, StateId::new(0), 5).unwrap();
        assert!((stats.discounted_reward - 2.71).abs() < 1e-12);
        assert_eq!(stats.raw_reward, 3.0);
        assert_eq!(stats.net_core_delta, 0);
        assert_eq!(stats.time_in_state, vec![3]);
    }

    #[test]
    fn curve_endpoints_match_totals() {
        let model = keeper_model(1.0);
        let agent = Agent::FixedPolicy(Policy::new(vec![Action::Keep]));
        let stats = simulate_with_curve(&model, &agent, 10, StateId::new(0), 5).unwrap();
        let curve = stats.reward_curve.as_ref().unwrap();
        assert_eq!(curve.len(), 10);
        assert_eq!(curve[0].step, 1);
        assert_eq!(curve.last().unwrap().cumulative_raw, stats.raw_reward);
        assert_eq!(
            curve.last().unwrap().cumulative_discounted,
            stats.discounted_reward
        );
        // The curve is the only difference against a plain run.
        let plain = simulate(&model, &agent, 10, StateId::new(0), 5).unwrap();
        assert_eq!(plain.discounted_reward, stats.discounted_reward);
        assert!(plain.reward_curve.is_none());
    }

    #[test]
    fn single_run_aggregate_is_degenerate() {
        let model = keeper_model(-2.0);
        let agent = Agent::FixedPolicy(Policy::new(vec![Action::Keep]));
        let agg = monte_carlo(&model, &agent, 1, 50, StateId::new(0), 11).unwrap();
        let single = simulate(&model, &agent, 50, StateId::new(0), run_seed(11, 0)).unwrap();
        assert_eq!(agg.runs, 1);
        assert_eq!(agg.discounted_reward.mean, single.discounted_reward);
        assert_eq!(agg.discounted_reward.std_dev, 0.0);
        assert_eq!(agg.net_core_delta.std_dev, 0.0);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let model = crate::scenarios::build_table1::<f64>(crate::scenarios::ProcessKind::Sdr);
        let agent = Agent::Ras;
        let a = monte_carlo(&model, &agent, 64, 100, StateId::new(1), 77).unwrap();
        let b = monte_carlo(&model, &agent, 64, 100, StateId::new(1), 77).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&model, &agent, 64, 100, StateId::new(1), 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ras_behavior_at_extremes() {
        let model = crate::scenarios::build_table1::<f64>(crate::scenarios::ProcessKind::Sdr);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut saw_add = false;
        let mut saw_remove = false;
        for _ in 0..256 {
            assert_eq!(
                Agent::Ras.select(&model, StateId::new(0), &mut rng),
                Action::RemoveCore
            );
            assert_eq!(
                Agent::Ras.select(&model, StateId::new(2), &mut rng),
                Action::AddCore
            );
            match Agent::Ras.select(&model, StateId::new(1), &mut rng) {
                Action::AddCore => saw_add = true,
                Action::RemoveCore => saw_remove = true,
                Action::Keep => panic!("RAS must never keep"),
            }
        }
        assert!(saw_add && saw_remove);
    }

    #[test]
    fn net_delta_matches_visit_counts_for_fixed_policy() {
        let model = crate::scenarios::build_table1::<f64>(crate::scenarios::ProcessKind::Sdr);
        let policy = Policy::new(vec![Action::RemoveCore, Action::RemoveCore, Action::AddCore]);
        let stats = simulate(
            &model,
            &Agent::FixedPolicy(policy.clone()),
            5_000,
            StateId::new(1),
            123,
        )
        .unwrap();
        let expected: i64 = model
            .states()
            .map(|s| stats.time_in_state[s.index()] as i64 * policy.action(s).core_delta())
            .sum();
        assert_eq!(stats.net_core_delta, expected);
        assert_eq!(stats.time_in_state.iter().sum::<u64>(), stats.steps);
    }

    #[test]
    fn error_paths() {
        let model = keeper_model(1.0);
        let agent = Agent::FixedPolicy(Policy::new(vec![Action::Keep]));
        assert_eq!(
            simulate(&model, &agent, 0, StateId::new(0), 1),
            Err(SimError::ZeroSteps)
        );
        assert_eq!(
            simulate(&model, &agent, 5, StateId::new(9), 1),
            Err(SimError::InitStateOutOfRange {
                index: 9,
                n_states: 1
            })
        );
        assert_eq!(
            run_trajectories(&model, &agent, 0, 5, StateId::new(0), 1),
            Err(SimError::ZeroRuns)
        );
        // RAS forces AddCore at the single (== highest) state, which this
        // model does not allow.
        let err = simulate(&model, &Agent::Ras, 5, StateId::new(0), 1).unwrap_err();
        assert_eq!(
            err,
            SimError::Model(ModelError::DisallowedAction {
                state: StateId::new(0),
                action: Action::AddCore,
            })
        );
    }

    #[test]
    fn energy_conversion_is_exact() {
        let model = EnergyModel::<f64>::default();
        assert_eq!(energy_savings(40.0, &model), 76.8);
        assert_eq!(energy_savings(0.0, &model), 0.0);
        let custom = EnergyModel::new(100.0, 10.0).unwrap();
        assert_eq!(energy_savings(1.0, &custom), 1.0);
        assert!(EnergyModel::new(-1.0, 24.0).is_err());
        assert!(EnergyModel::new(80.0, 0.0).is_err());
        assert!(EnergyModel::new(f64::NAN, 24.0).is_err());
    }

    #[test]
    fn value_stddev_cases() {
        assert_eq!(
            value_stddev(&ValueVector::new(vec![0.0, 0.0, 0.0])).unwrap(),
            0.0
        );
        assert_eq!(
            value_stddev(&ValueVector::new(vec![1.0, 1.0, 1.0])).unwrap(),
            0.0
        );
        // Population std of (1, 3): mean 2, deviations +-1.
        let two_point: f64 = value_stddev(&ValueVector::new(vec![1.0, 3.0])).unwrap();
        assert!((two_point - 1.0).abs() < 1e-15);
        assert_eq!(
            value_stddev(&ValueVector::<f64>::new(vec![4.0])),
            Err(SimError::TooFewStates { n_states: 1 })
        );
    }

    #[test]
    fn run_seeds_are_spread() {
        let seeds: Vec<u64> = (0..64).map(|i| run_seed(9, i)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_ne!(run_seed(9, 0), run_seed(10, 0));
    }
}
