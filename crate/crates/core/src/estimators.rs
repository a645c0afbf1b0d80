//! Trajectory-level return estimators and streaming aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TimedPolicy, Trajectory};

fn ratio_at(pi: &TimedPolicy, mu: &TimedPolicy, t: usize, s: usize, a: usize) -> Result<f64> {
    let m = mu.prob(t, s, a);
    if m <= 0.0 {
        return Err(Error::InvalidTrajectory {
            t,
            state: s,
            action: a,
        });
    }
    Ok(pi.prob(t, s, a) / m)
}

/// Per-decision importance-sampled return: backward loop
/// `G <- rho_t (R_{t+1} + G)`.
///
/// Reduces to the raw return when `mu == pi`.
pub fn pdis_return(traj: &Trajectory, pi: &TimedPolicy, mu: &TimedPolicy) -> Result<f64> {
    let mut g = 0.0;
    for (t, step) in traj.steps().iter().enumerate().rev() {
        let rho = ratio_at(pi, mu, t, step.state, step.action)?;
        g = rho * (step.reward + g);
    }
    Ok(g)
}

/// Ordinary importance-sampled return: the full ratio product times the raw
/// return.
pub fn ois_return(traj: &Trajectory, pi: &TimedPolicy, mu: &TimedPolicy) -> Result<f64> {
    let mut product = 1.0;
    for (t, step) in traj.steps().iter().enumerate() {
        product *= ratio_at(pi, mu, t, step.state, step.action)?;
    }
    Ok(product * traj.raw_return())
}

/// Streaming mean/second-moment accumulator,
/// `J <- J + (G - J) / n`.
///
/// The mean of an empty accumulator is 0 by convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateAccumulator {
    count: u64,
    mean: f64,
    sum_sq: f64,
}

impl EstimateAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, g: f64) {
        self.count += 1;
        self.mean += (g - self.mean) / self.count as f64;
        self.sum_sq += g * g;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Empirical second moment `E[G^2]`; 0 when empty.
    pub fn second_moment(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_sq / self.count as f64
        }
    }

    /// Biased (population) variance of the observed values; 0 when empty.
    pub fn variance(&self) -> f64 {
        let m = self.mean;
        (self.second_moment() - m * m).max(0.0)
    }

    /// Combine two accumulators as if their streams had been concatenated.
    pub fn merge(&self, other: &EstimateAccumulator) -> EstimateAccumulator {
        let count = self.count + other.count;
        if count == 0 {
            return EstimateAccumulator::new();
        }
        let w = other.count as f64 / count as f64;
        EstimateAccumulator {
            count,
            mean: self.mean + (other.mean - self.mean) * w,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }
}
