//! Random grid-world benchmark environments and random target policies.
//!
//! A size-`n` grid world has `n * n` cells, four movement actions, horizon
//! `n`, slip dynamics (the chosen direction with probability 0.9 plus a
//! uniformly random direction with the remaining 0.1), rewards drawn once
//! per `(s, a)` and normalized to a maximum of 1, and a uniform initial
//! distribution. Transition rows are constructed analytically, not sampled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{FeatureKind, FeatureMap};
use crate::mdp::{TabularMDP, TimedPolicy};
use crate::rng::{uniform_simplex, RngSeed};

/// Parameters of a random grid world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    /// Width, height, and horizon are all `n`.
    pub n: usize,
    /// Probability of moving in the chosen direction (the remaining mass
    /// moves in a uniformly random direction).
    pub slip: f64,
    pub seed: u64,
}

impl GridWorldSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        GridWorldSpec { n, slip: 0.9, seed }
    }
}

/// Movement actions, indexed 0..4.
const DIRECTIONS: [(isize, isize); 4] = [
    (-1, 0), // up
    (1, 0),  // down
    (0, -1), // left
    (0, 1),  // right
];

fn cell_after(n: usize, s: usize, dir: usize) -> usize {
    let (row, col) = (s / n, s % n);
    let (dr, dc) = DIRECTIONS[dir];
    let (nr, nc) = (row as isize + dr, col as isize + dc);
    if nr < 0 || nc < 0 || nr >= n as isize || nc >= n as isize {
        s // boundary moves keep the position
    } else {
        (nr as usize) * n + nc as usize
    }
}

/// Build the grid world for `spec`.
///
/// RNG consumption: one `f64` per `(s, a)` reward, state-major then
/// action-major.
pub fn make_gridworld(spec: &GridWorldSpec) -> Result<TabularMDP> {
    if spec.n < 2 {
        return Err(Error::InvalidArgument("grid size n must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(Error::InvalidArgument("slip must lie in [0, 1]".into()));
    }
    let n = spec.n;
    let num_states = n * n;
    let num_actions = 4;

    let mut rng = RngSeed(spec.seed).stream();
    let mut reward = vec![vec![0.0; num_actions]; num_states];
    let mut max = f64::MIN;
    for row in &mut reward {
        for r in row.iter_mut() {
            *r = rng.gen::<f64>();
            max = max.max(*r);
        }
    }
    for row in &mut reward {
        for r in row.iter_mut() {
            *r /= max;
        }
    }

    let mut transition = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
    let random_share = (1.0 - spec.slip) / num_actions as f64;
    for s in 0..num_states {
        for a in 0..num_actions {
            for dir in 0..num_actions {
                let mass = random_share + if dir == a { spec.slip } else { 0.0 };
                transition[s][a][cell_after(n, s, dir)] += mass;
            }
        }
    }

    let initial = vec![1.0 / num_states as f64; num_states];
    TabularMDP::new(num_states, num_actions, n, reward, transition, initial)
}

/// Draw a target policy with every `(t, s)` row uniform on the simplex.
pub fn random_policy(mdp: &TabularMDP, seed: u64) -> TimedPolicy {
    let mut rng = RngSeed(seed).stream();
    let rows = (0..mdp.horizon())
        .map(|_| {
            (0..mdp.num_states())
                .map(|_| uniform_simplex(&mut rng, mdp.num_actions()))
                .collect()
        })
        .collect();
    TimedPolicy::new(rows).expect("simplex rows are valid distributions")
}

/// The feature map for this environment and representation choice.
pub fn features_for(mdp: &TabularMDP, kind: FeatureKind) -> FeatureMap {
    FeatureMap::new(kind, mdp)
}
