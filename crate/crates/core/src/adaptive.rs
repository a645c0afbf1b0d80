//! Adaptive online evaluation: UCB switching between the learned behavior
//! policy and the target policy.
//!
//! Both arms yield unbiased PDIS estimates of the target value, so every
//! episode's return enters the running estimate regardless of which arm
//! produced it; the arm reward is the negated squared return, whose mean
//! orders the arms by estimator variance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{pdis_return, EstimateAccumulator};
use crate::mdp::{sample_trajectory, TabularMDP, TimedPolicy};

/// The two arms of the evaluation bandit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// The learned behavior policy; pulled first and preferred on ties.
    Learned,
    /// The target policy itself (plain on-policy Monte Carlo).
    Target,
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arm::Learned => write!(f, "mu-hat"),
            Arm::Target => write!(f, "pi"),
        }
    }
}

/// UCB bookkeeping: per-arm pull counts and sums of arm rewards (`-G^2`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcbState {
    c: f64,
    counts: [u64; 2],
    reward_sums: [f64; 2],
}

fn arm_index(arm: Arm) -> usize {
    match arm {
        Arm::Learned => 0,
        Arm::Target => 1,
    }
}

impl UcbState {
    pub fn new(c: f64) -> Self {
        UcbState {
            c,
            counts: [0; 2],
            reward_sums: [0.0; 2],
        }
    }

    pub fn count(&self, arm: Arm) -> u64 {
        self.counts[arm_index(arm)]
    }

    pub fn total_pulls(&self) -> u64 {
        self.counts[0] + self.counts[1]
    }

    /// Arithmetic mean of the recorded arm rewards; 0 before the first pull.
    pub fn average(&self, arm: Arm) -> f64 {
        let i = arm_index(arm);
        if self.counts[i] == 0 {
            0.0
        } else {
            self.reward_sums[i] / self.counts[i] as f64
        }
    }

    /// UCB arm choice. Unpulled arms go first (learned before target); after
    /// both initial pulls the argmax of `average + c sqrt(ln n / count)`
    /// wins, with ties resolved toward the learned arm.
    pub fn select_arm(&self) -> Arm {
        if self.counts[arm_index(Arm::Learned)] == 0 {
            return Arm::Learned;
        }
        if self.counts[arm_index(Arm::Target)] == 0 {
            return Arm::Target;
        }
        let n = self.total_pulls() as f64;
        let score =
            |arm: Arm| self.average(arm) + self.c * (n.ln() / self.count(arm) as f64).sqrt();
        if score(Arm::Learned) >= score(Arm::Target) {
            Arm::Learned
        } else {
            Arm::Target
        }
    }

    pub fn record(&mut self, arm: Arm, g: f64) {
        let i = arm_index(arm);
        self.counts[i] += 1;
        self.reward_sums[i] += -(g * g);
    }
}

/// One logged episode of an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub arm: Arm,
    pub g: f64,
    pub neg_g_sq: f64,
    pub j_so_far: f64,
}

/// Result of an adaptive run: the pooled estimate and the episode log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveRunResult {
    /// Mean of all logged PDIS returns, across both arms.
    pub estimate: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl AdaptiveRunResult {
    pub fn pull_fraction(&self, arm: Arm) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().filter(|e| e.arm == arm).count() as f64 / self.episodes.len() as f64
    }
}

/// Run `episodes` adaptive episodes with UCB constant `c`.
///
/// Per episode the RNG is consumed by trajectory sampling only (see
/// [`sample_trajectory`] for the draw order); arm selection is
/// deterministic given the log so far.
pub fn run_adaptive<R: Rng>(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    mu_hat: &TimedPolicy,
    episodes: usize,
    c: f64,
    rng: &mut R,
) -> Result<AdaptiveRunResult> {
    if episodes == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "episode count must be >= 1".into(),
        ));
    }
    let mut state = UcbState::new(c);
    let mut estimate = EstimateAccumulator::new();
    let mut log = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let arm = state.select_arm();
        let behavior = match arm {
            Arm::Learned => mu_hat,
            Arm::Target => pi,
        };
        let traj = sample_trajectory(mdp, behavior, rng)?;
        let g = pdis_return(&traj, pi, behavior)?;
        state.record(arm, g);
        estimate.update(g);
        log.push(EpisodeRecord {
            episode,
            arm,
            g,
            neg_g_sq: -(g * g),
            j_so_far: estimate.mean(),
        });
    }
    Ok(AdaptiveRunResult {
        estimate: estimate.mean(),
        episodes: log,
    })
}

/// Cumulative variance regret per episode against the exact arm variances.
///
/// `regret[k] = sum_{i <= k} V(arm_i) - (k + 1) min(V_learned, V_target)`.
pub fn empirical_regret(log: &[EpisodeRecord], var_learned: f64, var_target: f64) -> Vec<f64> {
    let best = var_learned.min(var_target);
    let mut cum = 0.0;
    log.iter()
        .map(|record| {
            cum += match record.arm {
                Arm::Learned => var_learned,
                Arm::Target => var_target,
            } - best;
            cum
        })
        .collect()
}
