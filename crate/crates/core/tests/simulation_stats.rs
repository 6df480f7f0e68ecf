//! Statistical behavior of the seeded simulator against independent
//! oracles: law-of-large-numbers frequencies, chi-square row checks, the
//! stationary distribution of an induced chain, and agreement between
//! Monte Carlo means and exact policy values.

use cpumdp::model::{Action, MdpModel, Policy, StateId};
use cpumdp::scenarios::{build_parameterized, build_table1, ProcessKind, RewardRules, ScenarioSpec};
use cpumdp::simulator::{monte_carlo, simulate, Agent};
use cpumdp::solver::{policy_value_exact, value_iteration};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SAMPLES: u64 = 100_000;

#[test]
fn sampled_frequency_tracks_table_probability() {
    let sdn = build_table1::<f64>(ProcessKind::Sdn);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut hits = 0u64;
    for _ in 0..SAMPLES {
        let (next, _) = sdn
            .sample_transition(StateId::new(1), Action::AddCore, &mut rng)
            .unwrap();
        if next == StateId::new(0) {
            hits += 1;
        }
    }
    let freq = hits as f64 / SAMPLES as f64;
    assert!((freq - 0.8).abs() < 0.01, "frequency {freq}");
}

#[test]
fn chi_square_sanity_over_all_stochastic_rows() {
    // One binomial row at a time: df = 1, 99.9% critical value 10.83.
    for kind in [ProcessKind::Sdr, ProcessKind::Sdn] {
        let model = build_table1::<f64>(kind);
        for s in model.states() {
            for a in model.allowed(s) {
                let outcomes = model.outcomes(s, a).unwrap();
                if outcomes.len() < 2 {
                    continue;
                }
                let seed = 1000 + s.index() as u64 * 10 + a.index() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut counts = vec![0u64; outcomes.len()];
                for _ in 0..SAMPLES {
                    let (next, _) = model.sample_transition(s, a, &mut rng).unwrap();
                    let slot = outcomes.iter().position(|o| o.next == next).unwrap();
                    counts[slot] += 1;
                }
                let chi2: f64 = outcomes
                    .iter()
                    .zip(&counts)
                    .map(|(o, &c)| {
                        let expected = o.probability * SAMPLES as f64;
                        (c as f64 - expected).powi(2) / expected
                    })
                    .sum();
                assert!(chi2 < 10.83, "{kind} ({s},{a}): chi2 = {chi2}");
            }
        }
    }
}

/// Stationary distribution of the chain induced by a fixed policy, found by
/// power iteration on the row vector; independent of the solver path.
fn stationary_by_power_iteration(model: &MdpModel<f64>, policy: &Policy) -> Vec<f64> {
    let n = model.n_states();
    let mut dist = vec![1.0 / n as f64; n];
    for _ in 0..4000 {
        let mut next = vec![0.0; n];
        for s in model.states() {
            let row = model.outcomes(s, policy.action(s)).unwrap();
            for outcome in row {
                next[outcome.next.index()] += dist[s.index()] * outcome.probability;
            }
        }
        dist = next;
    }
    dist
}

#[test]
fn visit_frequencies_match_stationary_distribution() {
    let model = build_table1::<f64>(ProcessKind::Sdr);
    let policy = Policy::new(vec![Action::RemoveCore, Action::RemoveCore, Action::AddCore]);
    let stationary = stationary_by_power_iteration(&model, &policy);

    let stats = simulate(
        &model,
        &Agent::FixedPolicy(policy),
        SAMPLES,
        StateId::new(1),
        42,
    )
    .unwrap();
    for s in model.states() {
        let freq = stats.time_in_state[s.index()] as f64 / stats.steps as f64;
        assert!(
            (freq - stationary[s.index()]).abs() < 0.01,
            "{s}: {freq} vs {}",
            stationary[s.index()]
        );
    }
}

#[test]
fn monte_carlo_mean_matches_exact_policy_value() {
    let model = build_table1::<f64>(ProcessKind::Sdr);
    let policy = Policy::new(vec![Action::RemoveCore, Action::RemoveCore, Action::AddCore]);
    let init = StateId::new(1);
    let exact = policy_value_exact(&model, &policy).unwrap();

    let agg = monte_carlo(
        &model,
        &Agent::FixedPolicy(policy),
        10_000,
        1_000,
        init,
        42,
    )
    .unwrap();
    let standard_error = agg.discounted_reward.std_dev / (agg.runs as f64).sqrt();
    assert!(
        (agg.discounted_reward.mean - exact.get(init)).abs() <= 3.0 * standard_error,
        "mean {} vs exact {} (3se = {})",
        agg.discounted_reward.mean,
        exact.get(init),
        3.0 * standard_error
    );
}

#[test]
fn solved_policy_outearns_random_actions() {
    let spec = ScenarioSpec::with_p_change(ProcessKind::Sdr, 0.1);
    let model = build_parameterized::<f64>(&spec, &RewardRules::default()).unwrap();
    let vi = value_iteration(&model, 1e-3, 10_000).unwrap();
    let init = StateId::new(1);
    let solved = monte_carlo(
        &model,
        &Agent::FixedPolicy(vi.policy.clone()),
        500,
        500,
        init,
        42,
    )
    .unwrap();
    let random = monte_carlo(&model, &Agent::Ras, 500, 500, init, 42).unwrap();
    assert!(
        solved.raw_reward.mean > random.raw_reward.mean,
        "{} vs {}",
        solved.raw_reward.mean,
        random.raw_reward.mean
    );
}

mod trajectory_properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trajectory_accounting_invariants(
            seed in any::<u64>(),
            steps in 1u64..400,
            kind_is_sdr in any::<bool>(),
            use_ras in any::<bool>(),
        ) {
            let kind = if kind_is_sdr { ProcessKind::Sdr } else { ProcessKind::Sdn };
            let model = build_table1::<f64>(kind);
            let agent = if use_ras {
                Agent::Ras
            } else {
                let vi = value_iteration(&model, 1e-3, 10_000).unwrap();
                Agent::FixedPolicy(vi.policy)
            };
            let stats = simulate(&model, &agent, steps, StateId::new(1), seed).unwrap();

            prop_assert_eq!(stats.time_in_state.iter().sum::<u64>(), steps);
            prop_assert!(stats.net_core_delta.unsigned_abs() <= steps);
            let bound = model.max_abs_reward() / (1.0 - model.gamma());
            prop_assert!(stats.discounted_reward.abs() <= bound);
            let frac: f64 = stats.frac_highest();
            prop_assert!((0.0..=1.0).contains(&frac));
        }

        // The random agent only ever adds or removes, and only where allowed.
        #[test]
        fn ras_emits_only_legal_moves(seed in any::<u64>(), n in 3usize..7) {
            let mut spec = ScenarioSpec::table_default(ProcessKind::Sdn);
            spec.n_states = n;
            let model = build_parameterized::<f64>(&spec, &RewardRules::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in model.states() {
                for _ in 0..32 {
                    let action = Agent::Ras.select(&model, s, &mut rng);
                    prop_assert_ne!(action, Action::Keep);
                    prop_assert!(model.is_allowed(s, action));
                    if s == model.highest_state() {
                        prop_assert_eq!(action, Action::AddCore);
                    }
                    if s.index() == 0 {
                        prop_assert_eq!(action, Action::RemoveCore);
                    }
                }
            }
        }
    }
}
