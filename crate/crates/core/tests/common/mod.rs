//! Shared generators for randomized oracle tests: tiny MDPs small enough
//! for exhaustive trajectory enumeration, plus admissible behavior policies.

#![allow(clippy::needless_range_loop)]

use offmc::mdp::{TabularMDP, TimedPolicy};
use offmc::rng::uniform_simplex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random MDP with |S| <= 3, |A| <= 2, T <= 3.
///
/// Roughly a third of the rewards are exactly zero so that pairs with
/// `pi * q = 0` genuinely exist and the relaxed support condition gets
/// exercised.
pub fn random_tiny_mdp(rng: &mut ChaCha8Rng) -> TabularMDP {
    let num_states = 1 + (rng.gen::<u64>() % 3) as usize;
    let num_actions = 1 + (rng.gen::<u64>() % 2) as usize;
    let horizon = 1 + (rng.gen::<u64>() % 3) as usize;
    let reward = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| {
                    if rng.gen::<f64>() < 0.3 {
                        0.0
                    } else {
                        rng.gen::<f64>() * 2.0 - 0.5
                    }
                })
                .collect()
        })
        .collect();
    let transition = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| uniform_simplex(rng, num_states))
                .collect()
        })
        .collect();
    let initial = uniform_simplex(rng, num_states);
    TabularMDP::new(
        num_states,
        num_actions,
        horizon,
        reward,
        transition,
        initial,
    )
    .expect("generated rows are valid")
}

/// A full-support random policy matching the MDP's shape.
pub fn random_policy_for(mdp: &TabularMDP, rng: &mut ChaCha8Rng) -> TimedPolicy {
    let rows = (0..mdp.horizon())
        .map(|_| {
            (0..mdp.num_states())
                .map(|_| uniform_simplex(rng, mdp.num_actions()))
                .collect()
        })
        .collect();
    TimedPolicy::new(rows).expect("simplex rows are valid")
}

/// A random admissible behavior policy: full support except that actions
/// with `pi * q = 0` are sometimes dropped (still unbiased through the
/// relaxed support condition).
#[allow(dead_code)] // not every test target uses it
pub fn random_admissible_policy(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    q: &[Vec<Vec<f64>>],
    rng: &mut ChaCha8Rng,
) -> TimedPolicy {
    let mut rows = Vec::with_capacity(mdp.horizon());
    for t in 0..mdp.horizon() {
        let mut per_s = Vec::with_capacity(mdp.num_states());
        for s in 0..mdp.num_states() {
            let mut row = uniform_simplex(rng, mdp.num_actions());
            if mdp.num_actions() > 1 {
                for a in 0..mdp.num_actions() {
                    if pi.prob(t, s, a) * q[t][s][a] == 0.0 && rng.gen::<f64>() < 0.5 {
                        row[a] = 0.0;
                    }
                }
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    for w in &mut row {
                        *w /= sum;
                    }
                } else {
                    row = vec![1.0 / mdp.num_actions() as f64; mdp.num_actions()];
                }
            }
            per_s.push(row);
        }
        rows.push(per_s);
    }
    TimedPolicy::new(rows).expect("rows are valid")
}
