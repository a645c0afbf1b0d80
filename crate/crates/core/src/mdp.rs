//! Finite-horizon tabular MDPs, time-indexed policies, and trajectory
//! sampling.
//!
//! Dynamics are time-homogeneous (one reward table and one transition table
//! shared by all time steps) while policies are time-indexed. Probability
//! rows are validated at construction with tolerance `1e-12` and then
//! renormalized, so downstream dynamic programming can treat them as exact
//! distributions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::categorical;

/// Row-validation tolerance for probability tables.
pub const ROW_SUM_TOL: f64 = 1e-12;

fn validate_row(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || !(0.0..=1.0 + ROW_SUM_TOL).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {p} outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what}: row sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn renormalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
}

/// A finite-horizon MDP with deterministic rewards `r(s, a)`.
#[derive(Debug, Clone, Serialize)]
pub struct TabularMDP {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    /// `initial[s]`
    initial: Vec<f64>,
}

#[derive(Deserialize)]
struct TabularMdpData {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
}

impl TabularMDP {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        reward: Vec<Vec<f64>>,
        mut transition: Vec<Vec<Vec<f64>>>,
        mut initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::DimensionMismatch(
                "num_states, num_actions, and horizon must be positive".into(),
            ));
        }
        if reward.len() != num_states || reward.iter().any(|row| row.len() != num_actions) {
            return Err(Error::DimensionMismatch(format!(
                "reward table must be {num_states} x {num_actions}"
            )));
        }
        if reward.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("rewards must be finite".into()));
        }
        if transition.len() != num_states
            || transition.iter().any(|per_a| {
                per_a.len() != num_actions || per_a.iter().any(|row| row.len() != num_states)
            })
        {
            return Err(Error::DimensionMismatch(format!(
                "transition table must be {num_states} x {num_actions} x {num_states}"
            )));
        }
        if initial.len() != num_states {
            return Err(Error::DimensionMismatch(format!(
                "initial distribution must have {num_states} entries"
            )));
        }
        for (s, per_a) in transition.iter().enumerate() {
            for (a, row) in per_a.iter().enumerate() {
                validate_row(row, &format!("transition({s}, {a})"))?;
            }
        }
        validate_row(&initial, "initial distribution")?;
        for per_a in &mut transition {
            for row in per_a {
                renormalize_row(row);
            }
        }
        renormalize_row(&mut initial);
        Ok(TabularMDP {
            num_states,
            num_actions,
            horizon,
            reward,
            transition,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn reward_table(&self) -> &[Vec<f64>] {
        &self.reward
    }

    /// Transition row `p(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let data: TabularMdpData = serde_json::from_str(text)?;
        TabularMDP::new(
            data.num_states,
            data.num_actions,
            data.horizon,
            data.reward,
            data.transition,
            data.initial,
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// A time-indexed stochastic policy table; serves both the target and the
/// behavior role.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedPolicy {
    /// `probs[t][s][a]`
    probs: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct TimedPolicyData {
    probs: Vec<Vec<Vec<f64>>>,
}

impl TimedPolicy {
    pub fn new(mut probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() || probs[0][0].is_empty() {
            return Err(Error::DimensionMismatch("policy table is empty".into()));
        }
        let (num_states, num_actions) = (probs[0].len(), probs[0][0].len());
        for (t, per_s) in probs.iter().enumerate() {
            if per_s.len() != num_states {
                return Err(Error::DimensionMismatch(format!(
                    "policy at t={t} has {} states, expected {num_states}",
                    per_s.len()
                )));
            }
            for (s, row) in per_s.iter().enumerate() {
                if row.len() != num_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "policy row ({t}, {s}) has {} actions, expected {num_actions}",
                        row.len()
                    )));
                }
                validate_row(row, &format!("policy({t}, {s})"))?;
            }
        }
        for per_s in &mut probs {
            for row in per_s {
                renormalize_row(row);
            }
        }
        Ok(TimedPolicy { probs })
    }

    /// The uniform policy for the given shape.
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let row = vec![1.0 / num_actions as f64; num_actions];
        TimedPolicy {
            probs: vec![vec![row; num_states]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn num_states(&self) -> usize {
        self.probs[0].len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0][0].len()
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[t][s][a]
    }

    /// Action distribution at `(t, s)`.
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.probs[t][s]
    }

    pub fn matches_shape(&self, mdp: &TabularMDP) -> bool {
        self.horizon() == mdp.horizon()
            && self.num_states() == mdp.num_states()
            && self.num_actions() == mdp.num_actions()
    }

    pub fn same_shape(&self, other: &TimedPolicy) -> bool {
        self.horizon() == other.horizon()
            && self.num_states() == other.num_states()
            && self.num_actions() == other.num_actions()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let data: TimedPolicyData = serde_json::from_str(text)?;
        TimedPolicy::new(data.probs)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// One `(state, action, reward)` step of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A length-`T` trajectory `S_0, A_0, R_1, ..., S_{T-1}, A_{T-1}, R_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Self {
        Trajectory { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Raw (unweighted) return `sum of R_i`.
    pub fn raw_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Sample one trajectory from `mdp` under `policy`.
///
/// RNG consumption order, one `f64` per draw: initial state first, then for
/// each step `t` the action, then (for `t < T-1` only) the next state.
pub fn sample_trajectory<R: Rng>(
    mdp: &TabularMDP,
    policy: &TimedPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    if !policy.matches_shape(mdp) {
        return Err(Error::DimensionMismatch(format!(
            "policy shape ({}, {}, {}) does not match mdp ({}, {}, {})",
            policy.horizon(),
            policy.num_states(),
            policy.num_actions(),
            mdp.horizon(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    let horizon = mdp.horizon();
    let mut steps = Vec::with_capacity(horizon);
    let mut state = categorical(rng, mdp.initial());
    for t in 0..horizon {
        let action = categorical(rng, policy.row(t, state));
        let reward = mdp.reward(state, action);
        steps.push(Step {
            state,
            action,
            reward,
        });
        if t + 1 < horizon {
            state = categorical(rng, mdp.transition_row(state, action));
        }
    }
    Ok(Trajectory::new(steps))
}

/// True iff `mu` covers `pi`: wherever `mu` is zero, `pi` is zero too.
pub fn covers(mu: &TimedPolicy, pi: &TimedPolicy) -> bool {
    debug_assert!(mu.same_shape(pi));
    for t in 0..mu.horizon() {
        for s in 0..mu.num_states() {
            for a in 0..mu.num_actions() {
                if mu.prob(t, s, a) == 0.0 && pi.prob(t, s, a) != 0.0 {
                    return false;
                }
            }
        }
    }
    true
}

/// Relaxed-support membership: wherever `mu` is zero, `pi * q_hat` must be
/// zero as well (tested against `1e-12` on the stored values).
///
/// `q_hat` is indexed `[t][s][a]`.
pub fn in_lambda_hat(mu: &TimedPolicy, pi: &TimedPolicy, q_hat: &[Vec<Vec<f64>>]) -> bool {
    debug_assert!(mu.same_shape(pi));
    for t in 0..mu.horizon() {
        for s in 0..mu.num_states() {
            for a in 0..mu.num_actions() {
                if mu.prob(t, s, a) == 0.0 && (pi.prob(t, s, a) * q_hat[t][s][a]).abs() > 1e-12 {
                    return false;
                }
            }
        }
    }
    true
}
