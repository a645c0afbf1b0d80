//! Optimal sampling distributions for importance-sampled expectations over a
//! finite set.
//!
//! Estimating `E_{A~pi}[q(A)]` by drawing `A ~ mu` and averaging
//! `rho(A) q(A)` with `rho = pi / mu` stays unbiased for any `mu` whose
//! support misses only indices with `pi(a) q(a) = 0`; the variance-minimizing
//! choice within that family is `mu* ∝ pi |q|`.

use crate::error::{Error, Result};

/// Values below this magnitude are snapped to exact zero at construction, so
/// support checks are genuine zero tests rather than tolerance tests.
const SNAP: f64 = 1e-300;

/// A finite estimation problem: nominal distribution `pi` and payoff `q`.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pi: Vec<f64>,
    q: Vec<f64>,
}

impl DiscreteProblem {
    pub fn new(pi: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if pi.is_empty() || pi.len() != q.len() {
            return Err(Error::DimensionMismatch(format!(
                "pi has {} entries, q has {}",
                pi.len(),
                q.len()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("q must be finite".into()));
        }
        let mut sum = 0.0;
        for &p in &pi {
            if !p.is_finite() || !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "pi entry {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "pi sums to {sum}, expected 1"
            )));
        }
        let snap = |x: f64| if x.abs() < SNAP { 0.0 } else { x };
        Ok(DiscreteProblem {
            pi: pi.into_iter().map(snap).collect(),
            q: q.into_iter().map(snap).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// First index violating membership in the admissible family
    /// (`mu(a) = 0` while `pi(a) q(a) != 0`), if any.
    fn support_violation(&self, mu: &[f64]) -> Option<usize> {
        (0..self.len()).find(|&a| mu[a] == 0.0 && self.pi[a] * self.q[a] != 0.0)
    }

    fn check_membership(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} entries, expected {}",
                mu.len(),
                self.len()
            )));
        }
        match self.support_violation(mu) {
            Some(index) => Err(Error::SamplerSupportViolation {
                index,
                mass: self.pi[index] * self.q[index],
            }),
            None => Ok(()),
        }
    }

    /// The variance-optimal sampling distribution `mu* ∝ pi |q|`, falling
    /// back to uniform when every `pi(a) q(a)` is zero.
    pub fn optimal_sampler(&self) -> Vec<f64> {
        let weights: Vec<f64> = self
            .pi
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| p * q.abs())
            .collect();
        let norm: f64 = weights.iter().sum();
        if norm < SNAP {
            vec![1.0 / self.len() as f64; self.len()]
        } else {
            weights.into_iter().map(|w| w / norm).collect()
        }
    }

    /// `E_{A~mu}[rho(A) q(A)]`, requiring `mu` to be admissible.
    pub fn weighted_mean(&self, mu: &[f64]) -> Result<f64> {
        self.check_membership(mu)?;
        Ok(self.weighted_mean_unchecked(mu))
    }

    /// As [`weighted_mean`](Self::weighted_mean) without the membership
    /// check, for experimenting with samplers that are unbiased only through
    /// problem-specific cancellation.
    pub fn weighted_mean_unchecked(&self, mu: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&a| mu[a] > 0.0)
            .map(|a| self.pi[a] * self.q[a])
            .sum()
    }

    /// `V_{A~mu}(rho(A) q(A))`, requiring `mu` to be admissible.
    pub fn weighted_variance(&self, mu: &[f64]) -> Result<f64> {
        self.check_membership(mu)?;
        Ok(self.weighted_variance_unchecked(mu))
    }

    /// Exact variance of `rho(A) q(A)` under `A ~ mu` for an arbitrary
    /// distribution `mu`, summing second moment and mean over the support of
    /// `mu` only.
    pub fn weighted_variance_unchecked(&self, mu: &[f64]) -> f64 {
        let mut second = 0.0;
        let mut mean = 0.0;
        for a in 0..self.len() {
            if mu[a] > 0.0 {
                let pq = self.pi[a] * self.q[a];
                second += pq * pq / mu[a];
                mean += pq;
            }
        }
        second - mean * mean
    }
}
