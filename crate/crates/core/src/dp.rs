//! Exact backward dynamic programming for every value, variance, and
//! behavior-policy quantity used by the estimator pipeline, plus an
//! exhaustive trajectory-enumeration oracle for tiny MDPs.
//!
//! All tables are time-major 64-bit float tables; `[t][s]` for state tables
//! and `[t][s][a]` for action tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMDP, TimedPolicy};

pub type StateTable = Vec<Vec<f64>>;
pub type ActionTable = Vec<Vec<Vec<f64>>>;

/// Normalizers below this trigger the uniform fallback branch when building
/// a behavior policy row.
const FALLBACK_EPS: f64 = 1e-300;

/// Exact action and state values of a target policy.
#[derive(Debug, Clone)]
pub struct PolicyValues {
    /// `q[t][s][a]`
    pub q: ActionTable,
    /// `v[t][s]`
    pub v: StateTable,
}

fn expect_next(mdp: &TabularMDP, s: usize, a: usize, next: &[f64]) -> f64 {
    mdp.transition_row(s, a)
        .iter()
        .zip(next)
        .map(|(&p, &x)| p * x)
        .sum()
}

/// Backward recursion for `q` and `v`: `q_{T-1} = r` and
/// `q_t = r + E[v_{t+1}]`, with `v_t = sum_a pi_t(a|s) q_t(s, a)`.
pub fn compute_q_v(mdp: &TabularMDP, pi: &TimedPolicy) -> PolicyValues {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut v = vec![vec![0.0; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                q[t][s][a] = mdp.reward(s, a)
                    + if t + 1 < horizon {
                        expect_next(mdp, s, a, &v[t + 1])
                    } else {
                        0.0
                    };
            }
            v[t][s] = pi
                .row(t, s)
                .iter()
                .zip(&q[t][s])
                .map(|(&p, &x)| p * x)
                .sum();
        }
    }
    PolicyValues { q, v }
}

/// Variance of the next-state value:
/// `nu_t(s, a) = V(v_{t+1}(S_{t+1}) | s, a)`, zero at the final step.
pub fn compute_nu(mdp: &TabularMDP, v: &StateTable) -> ActionTable {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut nu = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in 0..horizon.saturating_sub(1) {
        for s in 0..ns {
            for a in 0..na {
                let mean = expect_next(mdp, s, a, &v[t + 1]);
                let sq: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .zip(&v[t + 1])
                    .map(|(&p, &x)| p * x * x)
                    .sum();
                nu[t][s][a] = sq - mean * mean;
            }
        }
    }
    nu
}

/// Expected value of `table[t][s'][a']` under `p(s'|s,a)` and
/// `pi_{t}(a'|s')`.
fn expect_next_policy(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    t_next: usize,
    s: usize,
    a: usize,
    table_next: &[Vec<f64>],
) -> f64 {
    mdp.transition_row(s, a)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s2, &p)| {
            let inner: f64 = pi
                .row(t_next, s2)
                .iter()
                .zip(&table_next[s2])
                .map(|(&pp, &x)| pp * x)
                .sum();
            p * inner
        })
        .sum()
}

/// The variance-Bellman reward `r~ = nu + q^2 - v^2` and its action value
/// `q~` under `pi`.
///
/// `sum_a pi_t(a|s) q~_t(s, a)` equals the on-policy PDIS return variance
/// conditioned on `S_t = s`.
pub fn compute_tilde(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    values: &PolicyValues,
    nu: &ActionTable,
) -> (ActionTable, ActionTable) {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut r_tilde = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut q_tilde = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let v2 = values.v[t][s] * values.v[t][s];
            for a in 0..na {
                let q = values.q[t][s][a];
                r_tilde[t][s][a] = nu[t][s][a] + q * q - v2;
                q_tilde[t][s][a] = r_tilde[t][s][a]
                    + if t + 1 < horizon {
                        expect_next_policy(mdp, pi, t + 1, s, a, &q_tilde[t + 1])
                    } else {
                        0.0
                    };
            }
        }
    }
    (r_tilde, q_tilde)
}

/// The derived reward `r^ = 2 r q - r^2` and its action value `q^` under
/// `pi` (the square-compatible Bellman recursion).
///
/// Satisfies `q^ = q~ + v^2` and `q^ >= 0` pointwise.
pub fn compute_hat(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    q: &ActionTable,
) -> (ActionTable, ActionTable) {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut r_hat = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut q_hat = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                let r = mdp.reward(s, a);
                r_hat[t][s][a] = 2.0 * r * q[t][s][a] - r * r;
                q_hat[t][s][a] = r_hat[t][s][a]
                    + if t + 1 < horizon {
                        expect_next_policy(mdp, pi, t + 1, s, a, &q_hat[t + 1])
                    } else {
                        0.0
                    };
            }
        }
    }
    (r_hat, q_hat)
}

fn check_admissible(pi: &TimedPolicy, mu: &TimedPolicy, q: &ActionTable) -> Result<()> {
    if !mu.same_shape(pi) {
        return Err(Error::DimensionMismatch(
            "behavior and target policy shapes differ".into(),
        ));
    }
    for t in 0..pi.horizon() {
        for s in 0..pi.num_states() {
            for a in 0..pi.num_actions() {
                let mass = pi.prob(t, s, a) * q[t][s][a];
                if mu.prob(t, s, a) == 0.0 && mass != 0.0 {
                    return Err(Error::SupportViolation {
                        t,
                        state: s,
                        action: a,
                        mass,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Exact per-state variance of the PDIS estimator executing `mu` against
/// target `pi`: `w[t][s] = V(G_PDIS | S_t = s)`.
///
/// `mu` must be admissible: wherever `mu` is zero, `pi * q` must be zero.
pub fn pdis_variance(mdp: &TabularMDP, pi: &TimedPolicy, mu: &TimedPolicy) -> Result<StateTable> {
    let values = compute_q_v(mdp, pi);
    check_admissible(pi, mu, &values.q)?;
    let nu = compute_nu(mdp, &values.v);
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut w = vec![vec![0.0; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut second = 0.0;
            for a in 0..na {
                let m = mu.prob(t, s, a);
                if m > 0.0 {
                    let p = pi.prob(t, s, a);
                    let q = values.q[t][s][a];
                    let inner = if t + 1 < horizon {
                        expect_next(mdp, s, a, &w[t + 1]) + nu[t][s][a] + q * q
                    } else {
                        q * q
                    };
                    second += p * p / m * inner;
                }
            }
            w[t][s] = second - values.v[t][s] * values.v[t][s];
        }
    }
    Ok(w)
}

/// Variance of the PDIS estimator marginalized over the initial
/// distribution: `E_{S_0}[w_0(S_0)] + V_{S_0}(v_0(S_0))`.
pub fn pdis_variance_total(mdp: &TabularMDP, pi: &TimedPolicy, mu: &TimedPolicy) -> Result<f64> {
    let w = pdis_variance(mdp, pi, mu)?;
    let v0 = &compute_q_v(mdp, pi).v[0];
    let mean_w: f64 = mdp.initial().iter().zip(&w[0]).map(|(&p, &x)| p * x).sum();
    let mean_v: f64 = mdp.initial().iter().zip(v0).map(|(&p, &x)| p * x).sum();
    let mean_v2: f64 = mdp.initial().iter().zip(v0).map(|(&p, &x)| p * x * x).sum();
    Ok(mean_w + mean_v2 - mean_v * mean_v)
}

/// The globally variance-optimal behavior policy and its companions.
#[derive(Debug, Clone)]
pub struct OptimalBehavior {
    /// `u[t][s][a]`: per-action optimal variance load, `u >= q^2 >= 0`.
    pub u: ActionTable,
    /// `mu*`, proportional to `pi sqrt(u)` with uniform fallback.
    pub mu_star: TimedPolicy,
    /// `V(G_PDIS under mu* | S_t = s)`.
    pub w_var_star: StateTable,
}

/// Joint backward recursion of `u`, `mu*`, and the variance under `mu*`.
///
/// Per step: `u_t = E[w*_{t+1}] + nu_t + q_t^2` (terminal: `q^2`), the
/// policy row is `pi sqrt(u)` normalized, and
/// `w*_t(s) = (sum_a pi sqrt(u))^2 - v_t(s)^2`.
pub fn optimal_behavior(mdp: &TabularMDP, pi: &TimedPolicy) -> OptimalBehavior {
    let values = compute_q_v(mdp, pi);
    let nu = compute_nu(mdp, &values.v);
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut u = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut w_star = vec![vec![0.0; ns]; horizon];
    let mut rows = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut norm = 0.0;
            for a in 0..na {
                let q = values.q[t][s][a];
                u[t][s][a] = if t + 1 < horizon {
                    expect_next(mdp, s, a, &w_star[t + 1]) + nu[t][s][a] + q * q
                } else {
                    q * q
                };
                rows[t][s][a] = pi.prob(t, s, a) * u[t][s][a].max(0.0).sqrt();
                norm += rows[t][s][a];
            }
            if norm < FALLBACK_EPS {
                rows[t][s] = vec![1.0 / na as f64; na];
            } else {
                for w in &mut rows[t][s] {
                    *w /= norm;
                }
            }
            w_star[t][s] = norm * norm - values.v[t][s] * values.v[t][s];
        }
    }
    let mu_star = TimedPolicy::new(rows).expect("mu* rows are valid distributions");
    OptimalBehavior {
        u,
        mu_star,
        w_var_star: w_star,
    }
}

/// The locally optimal behavior policy `mu^ ∝ pi sqrt(q^)`, with the uniform
/// fallback when an entire row of `pi sqrt(q^)` vanishes.
pub fn mu_hat_exact(mdp: &TabularMDP, pi: &TimedPolicy, q_hat: &ActionTable) -> TimedPolicy {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut rows = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in 0..horizon {
        for s in 0..ns {
            let mut norm = 0.0;
            for a in 0..na {
                rows[t][s][a] = pi.prob(t, s, a) * q_hat[t][s][a].max(0.0).sqrt();
                norm += rows[t][s][a];
            }
            if norm < FALLBACK_EPS {
                rows[t][s] = vec![1.0 / na as f64; na];
            } else {
                for w in &mut rows[t][s] {
                    *w /= norm;
                }
            }
        }
    }
    TimedPolicy::new(rows).expect("mu^ rows are valid distributions")
}

/// The per-state Jensen-gap cost `c` and its shortest-path cost-to-go
/// `epsilon`: the guaranteed variance reduction of `mu^` over `pi`.
pub fn compute_epsilon(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    q_hat: &ActionTable,
) -> (StateTable, StateTable) {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut c = vec![vec![0.0; ns]; horizon];
    let mut eps = vec![vec![0.0; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut mean = 0.0;
            let mut mean_sqrt = 0.0;
            for a in 0..na {
                let p = pi.prob(t, s, a);
                mean += p * q_hat[t][s][a];
                mean_sqrt += p * q_hat[t][s][a].max(0.0).sqrt();
            }
            c[t][s] = mean - mean_sqrt * mean_sqrt;
            eps[t][s] = c[t][s]
                + if t + 1 < horizon {
                    (0..na)
                        .map(|a| expect_next(mdp, s, a, &eps[t + 1]))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                };
        }
    }
    (c, eps)
}

/// Which estimator the enumeration oracle evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Pdis,
    OrdinaryIs,
}

/// Exact estimator moments per initial state, from exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct Moments {
    /// `mean[s] = E[G | S_0 = s]`
    pub mean: Vec<f64>,
    /// `variance[s] = V(G | S_0 = s)`
    pub variance: Vec<f64>,
}

const ENUMERATION_CAP: f64 = 1e6;

/// Exact mean and variance of the chosen estimator under `mu`, conditioned
/// on each initial state, by probability-weighted enumeration of all
/// trajectories.
///
/// Enumerates every `(action, next-state)` path with positive probability;
/// the PDIS value is accumulated in its forward sum form, independent of the
/// backward-recursive estimator used elsewhere. Capped at
/// `|S|^T * |A|^T <= 1e6`.
pub fn brute_force_moments(
    mdp: &TabularMDP,
    pi: &TimedPolicy,
    mu: &TimedPolicy,
    kind: EstimatorKind,
) -> Result<Moments> {
    let size = (mdp.num_states() as f64 * mdp.num_actions() as f64).powi(mdp.horizon() as i32);
    if size > ENUMERATION_CAP {
        return Err(Error::EnumerationInfeasible {
            size,
            cap: ENUMERATION_CAP,
        });
    }
    let values = compute_q_v(mdp, pi);
    check_admissible(pi, mu, &values.q)?;

    let ns = mdp.num_states();
    let mut mean = vec![0.0; ns];
    let mut second = vec![0.0; ns];
    for s0 in 0..ns {
        let mut acc = PathAccumulator {
            mdp,
            pi,
            mu,
            kind,
            mean: 0.0,
            second: 0.0,
        };
        acc.walk(0, s0, 1.0, 1.0, 0.0, 0.0);
        mean[s0] = acc.mean;
        second[s0] = acc.second;
    }
    let variance = second
        .iter()
        .zip(&mean)
        .map(|(&m2, &m)| m2 - m * m)
        .collect();
    Ok(Moments { mean, variance })
}

struct PathAccumulator<'a> {
    mdp: &'a TabularMDP,
    pi: &'a TimedPolicy,
    mu: &'a TimedPolicy,
    kind: EstimatorKind,
    mean: f64,
    second: f64,
}

impl PathAccumulator<'_> {
    /// `prob` excludes the initial-state factor (moments are conditional on
    /// `S_0`); `ratio_prod` is `rho_{0:t-1}`, `pdis` the partial PDIS sum,
    /// `raw` the partial raw return.
    fn walk(&mut self, t: usize, s: usize, prob: f64, ratio_prod: f64, pdis: f64, raw: f64) {
        let horizon = self.mdp.horizon();
        for a in 0..self.mdp.num_actions() {
            let pm = self.mu.prob(t, s, a);
            if pm == 0.0 {
                continue;
            }
            let rho = self.pi.prob(t, s, a) / pm;
            let prod = ratio_prod * rho;
            let reward = self.mdp.reward(s, a);
            let pdis_next = pdis + prod * reward;
            let raw_next = raw + reward;
            let prob_a = prob * pm;
            if t + 1 == horizon {
                let value = match self.kind {
                    EstimatorKind::Pdis => pdis_next,
                    EstimatorKind::OrdinaryIs => prod * raw_next,
                };
                self.mean += prob_a * value;
                self.second += prob_a * value * value;
            } else {
                let row = self.mdp.transition_row(s, a);
                for (s2, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        self.walk(t + 1, s2, prob_a * p, prod, pdis_next, raw_next);
                    }
                }
            }
        }
    }
}

/// Every DP quantity for one `(mdp, pi)` pair, with the on-policy PDIS
/// variance as the named `w_var`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTables {
    pub v: StateTable,
    pub q: ActionTable,
    pub nu: ActionTable,
    pub r_tilde: ActionTable,
    pub q_tilde: ActionTable,
    pub r_hat: ActionTable,
    pub q_hat: ActionTable,
    pub u: ActionTable,
    /// On-policy PDIS variance per `(t, s)`.
    pub w_var: StateTable,
    pub c_cost: StateTable,
    pub epsilon: StateTable,
}

impl ValueTables {
    pub fn compute(mdp: &TabularMDP, pi: &TimedPolicy) -> ValueTables {
        let values = compute_q_v(mdp, pi);
        let nu = compute_nu(mdp, &values.v);
        let (r_tilde, q_tilde) = compute_tilde(mdp, pi, &values, &nu);
        let (r_hat, q_hat) = compute_hat(mdp, pi, &values.q);
        let (c_cost, epsilon) = compute_epsilon(mdp, pi, &q_hat);
        let w_var = pdis_variance(mdp, pi, pi).expect("the target policy is always admissible");
        let u = optimal_behavior(mdp, pi).u;
        ValueTables {
            v: values.v,
            q: values.q,
            nu,
            r_tilde,
            q_tilde,
            r_hat,
            q_hat,
            u,
            w_var,
            c_cost,
            epsilon,
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
