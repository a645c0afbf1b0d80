//! The grid-world experiment protocol: normalized error curves, exact
//! variance ratios, and the seeded end-to-end pipeline.
//!
//! Every result is a pure function of (config, seed); intermediate
//! randomness flows through numbered child seeds, so reruns are
//! byte-identical. Ground-truth policy values come from exact dynamic
//! programming rather than long Monte Carlo runs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive, Arm};
use crate::dataset::dataset_to_csv;
use crate::dp::{compute_q_v, pdis_variance_total};
use crate::error::{Error, Result};
use crate::estimators::{pdis_return, EstimateAccumulator};
use crate::gridworld::{features_for, make_gridworld, random_policy, GridWorldSpec};
use crate::learn::{augment, generate_offline, tune, FeatureKind, LearnedBehavior, TrainConfig};
use crate::mdp::{sample_trajectory, TabularMDP, TimedPolicy};
use crate::rng::{derive_seed, RngSeed};

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Grid size (width = height = horizon).
    pub n: usize,
    /// Intended-move probability of the grid dynamics.
    pub slip: f64,
    /// Master seed; everything else is derived from it.
    pub seed: u64,
    pub num_policies: usize,
    pub runs_per_policy: usize,
    /// Online interaction budget per run, in environment steps.
    pub online_steps: usize,
    /// Offline dataset size m.
    pub offline_tuples: usize,
    /// How many anonymous behavior policies generate the offline data.
    pub num_behavior_policies: usize,
    pub feature_kind: FeatureKind,
    /// Hyperparameter grid for the offline learning stages; empty means
    /// "use the feature-kind default".
    pub train_grid: Vec<TrainConfig>,
    pub ucb_c: f64,
    /// Grid sizes evaluated by the variance-ratio report.
    pub sizes: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 5,
            slip: 0.9,
            seed: 0,
            num_policies: 30,
            runs_per_policy: 30,
            online_steps: 500,
            offline_tuples: 100_000,
            num_behavior_policies: 5,
            feature_kind: FeatureKind::Tabular,
            train_grid: Vec::new(),
            ucb_c: 2f64.powi(-10),
            sizes: vec![5],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be >= 2".into()));
        }
        if self.num_policies == 0
            || self.runs_per_policy == 0
            || self.offline_tuples == 0
            || self.num_behavior_policies == 0
        {
            return Err(Error::InvalidArgument(
                "policy, run, tuple, and behavior-policy counts must be positive".into(),
            ));
        }
        if self.online_steps < self.n {
            return Err(Error::InvalidArgument(format!(
                "online budget {} is below one episode ({} steps)",
                self.online_steps, self.n
            )));
        }
        Ok(())
    }

    /// The tuning grid, falling back to the feature-kind default when the
    /// config leaves it empty.
    pub fn effective_grid(&self) -> Vec<TrainConfig> {
        if self.train_grid.is_empty() {
            vec![TrainConfig::for_features(self.feature_kind)]
        } else {
            self.train_grid.clone()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// FNV-1a hash of the canonical JSON encoding, hex-encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

// Child-seed streams of the master seed.
const STREAM_ENV: u64 = 1;
const STREAM_DATASET: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_POLICY: u64 = 1_000;
const STREAM_BEHAVIOR: u64 = 3_000;
const STREAM_RUNS: u64 = 10_000;

/// One target policy prepared for online evaluation.
#[derive(Debug, Clone)]
pub struct PreparedPolicy {
    pub pi: TimedPolicy,
    pub learned: LearnedBehavior,
    pub chosen_config: TrainConfig,
    /// Exact J(pi) from dynamic programming.
    pub exact_value: f64,
}

/// Exact total-rewards value of a policy.
pub fn exact_value(mdp: &TabularMDP, pi: &TimedPolicy) -> f64 {
    let v0 = &compute_q_v(mdp, pi).v[0];
    mdp.initial().iter().zip(v0).map(|(&p, &x)| p * x).sum()
}

/// Build the environment for a config (at its own `n`).
pub fn build_env(config: &ExperimentConfig) -> Result<TabularMDP> {
    build_env_sized(config, config.n)
}

fn build_env_sized(config: &ExperimentConfig, n: usize) -> Result<TabularMDP> {
    make_gridworld(&GridWorldSpec {
        n,
        slip: config.slip,
        seed: derive_seed(config.seed, STREAM_ENV.wrapping_add(n as u64)),
    })
}

/// Generate the shared offline dataset for an environment.
pub fn build_offline_dataset(
    config: &ExperimentConfig,
    mdp: &TabularMDP,
) -> Result<Vec<crate::learn::OfflineTuple>> {
    let behaviors: Vec<TimedPolicy> = (0..config.num_behavior_policies)
        .map(|j| random_policy(mdp, derive_seed(config.seed, STREAM_BEHAVIOR + j as u64)))
        .collect();
    let mut rng = RngSeed(derive_seed(config.seed, STREAM_DATASET)).stream();
    generate_offline(mdp, &behaviors, config.offline_tuples, &mut rng)
}

/// Draw the `p`-th target policy of the experiment.
pub fn target_policy(config: &ExperimentConfig, mdp: &TabularMDP, p: usize) -> TimedPolicy {
    random_policy(mdp, derive_seed(config.seed, STREAM_POLICY + p as u64))
}

/// Generate the dataset once, then tune and train a behavior policy for
/// each target policy.
pub fn prepare_policies(
    config: &ExperimentConfig,
    mdp: &TabularMDP,
) -> Result<Vec<PreparedPolicy>> {
    let dataset = build_offline_dataset(config, mdp)?;
    let features = features_for(mdp, config.feature_kind);
    let grid = config.effective_grid();
    let mut prepared = Vec::with_capacity(config.num_policies);
    for p in 0..config.num_policies {
        let pi = target_policy(config, mdp, p);
        let mut aug_rng = RngSeed(derive_seed(config.seed, STREAM_AUGMENT))
            .child(p as u64)
            .stream();
        let augmented = augment(&dataset, &pi, &mut aug_rng);
        let (chosen_config, learned) = tune(&augmented, &pi, &features, &grid)?;
        let exact = exact_value(mdp, &pi);
        prepared.push(PreparedPolicy {
            pi,
            learned,
            chosen_config,
            exact_value: exact,
        });
    }
    Ok(prepared)
}

/// The three online estimators compared by the error curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OnPolicy,
    OffPolicy,
    Adaptive,
}

pub const METHODS: [Method; 3] = [Method::OnPolicy, Method::OffPolicy, Method::Adaptive];

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::OnPolicy => "on-policy",
            Method::OffPolicy => "off-policy-mu-hat",
            Method::Adaptive => "adaptive",
        }
    }
}

/// One row of the error-curve report.
#[derive(Debug, Clone)]
pub struct ErrorCurvePoint {
    /// Environment steps consumed (multiples of the horizon).
    pub step: usize,
    pub method: Method,
    pub mean_norm_err: f64,
    pub std_err: f64,
}

/// Per-(policy, run, method) estimation-error traces.
///
/// `errors[method][policy * runs + run][episode]` is
/// `|J_episode - J(pi)| / J(pi)`.
fn collect_error_traces(
    config: &ExperimentConfig,
    mdp: &TabularMDP,
    prepared: &[PreparedPolicy],
) -> Result<[Vec<Vec<f64>>; 3]> {
    let episodes = config.online_steps / mdp.horizon();
    let mut traces: [Vec<Vec<f64>>; 3] = Default::default();
    for (p, policy) in prepared.iter().enumerate() {
        if policy.exact_value == 0.0 {
            return Err(Error::InvalidArgument(
                "exact policy value is zero; normalized error is undefined".into(),
            ));
        }
        for run in 0..config.runs_per_policy {
            for (m, method) in METHODS.iter().enumerate() {
                let cell = ((p * config.runs_per_policy + run) * METHODS.len() + m) as u64;
                let mut rng =
                    RngSeed(derive_seed(config.seed, STREAM_RUNS.wrapping_add(cell))).stream();
                let trace = match method {
                    Method::OnPolicy | Method::OffPolicy => {
                        let behavior = match method {
                            Method::OnPolicy => &policy.pi,
                            _ => &policy.learned.mu_hat,
                        };
                        let mut acc = EstimateAccumulator::new();
                        let mut trace = Vec::with_capacity(episodes);
                        for _ in 0..episodes {
                            let traj = sample_trajectory(mdp, behavior, &mut rng)?;
                            acc.update(pdis_return(&traj, &policy.pi, behavior)?);
                            trace
                                .push((acc.mean() - policy.exact_value).abs() / policy.exact_value);
                        }
                        trace
                    }
                    Method::Adaptive => {
                        let result = run_adaptive(
                            mdp,
                            &policy.pi,
                            &policy.learned.mu_hat,
                            episodes,
                            config.ucb_c,
                            &mut rng,
                        )?;
                        result
                            .episodes
                            .iter()
                            .map(|e| (e.j_so_far - policy.exact_value).abs() / policy.exact_value)
                            .collect()
                    }
                };
                traces[m].push(trace);
            }
        }
    }
    Ok(traces)
}

/// Normalized-error curves for the three methods, averaged over policies
/// and runs.
///
/// The normalizer is the average on-policy error after the first episode,
/// so the on-policy curve starts at exactly 1. Estimates begin after one
/// full episode (`step = horizon`).
pub fn error_curve(config: &ExperimentConfig) -> Result<Vec<ErrorCurvePoint>> {
    config.validate()?;
    let mdp = build_env(config)?;
    let prepared = prepare_policies(config, &mdp)?;
    error_curve_prepared(config, &mdp, &prepared)
}

/// As [`error_curve`] with environment and trained policies supplied.
pub fn error_curve_prepared(
    config: &ExperimentConfig,
    mdp: &TabularMDP,
    prepared: &[PreparedPolicy],
) -> Result<Vec<ErrorCurvePoint>> {
    let traces = collect_error_traces(config, mdp, prepared)?;
    let episodes = config.online_steps / mdp.horizon();
    let first_episode_mean: f64 =
        traces[0].iter().map(|trace| trace[0]).sum::<f64>() / traces[0].len() as f64;
    // A fully deterministic environment gives zero error everywhere; report
    // raw errors in that case instead of dividing by zero.
    let norm = if first_episode_mean > 0.0 {
        first_episode_mean
    } else {
        1.0
    };
    let mut rows = Vec::with_capacity(episodes * METHODS.len());
    for e in 0..episodes {
        for (m, method) in METHODS.iter().enumerate() {
            let samples: Vec<f64> = traces[m].iter().map(|trace| trace[e] / norm).collect();
            let count = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / count;
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
            rows.push(ErrorCurvePoint {
                step: (e + 1) * mdp.horizon(),
                method: *method,
                mean_norm_err: mean,
                std_err: (var / count).sqrt(),
            });
        }
    }
    Ok(rows)
}

pub fn error_curve_to_csv(rows: &[ErrorCurvePoint]) -> String {
    let mut out = String::from("step,method,mean_norm_err,std_err\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.step,
            row.method.label(),
            row.mean_norm_err,
            row.std_err
        );
    }
    out
}

/// One row of the variance-ratio report.
#[derive(Debug, Clone)]
pub struct VarianceRatioRow {
    pub n: usize,
    /// `V(PDIS under learned mu^) / V(PDIS under pi)`, both exact and
    /// marginalized over the initial distribution, averaged over policies.
    pub ratio: f64,
}

/// Exact variance ratios for every grid size in `config.sizes`.
pub fn variance_ratio(config: &ExperimentConfig) -> Result<Vec<VarianceRatioRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let sized = ExperimentConfig {
            n,
            sizes: vec![n],
            ..config.clone()
        };
        let mdp = build_env_sized(&sized, n)?;
        let prepared = prepare_policies(&sized, &mdp)?;
        rows.push(VarianceRatioRow {
            n,
            ratio: mean_variance_ratio(&mdp, &prepared)?,
        });
    }
    Ok(rows)
}

/// Average exact variance ratio of the prepared policies on one
/// environment.
pub fn mean_variance_ratio(mdp: &TabularMDP, prepared: &[PreparedPolicy]) -> Result<f64> {
    let mut sum = 0.0;
    for policy in prepared {
        let var_mu = pdis_variance_total(mdp, &policy.pi, &policy.learned.mu_hat)?;
        let var_pi = pdis_variance_total(mdp, &policy.pi, &policy.pi)?;
        if var_pi <= 0.0 {
            return Err(Error::InvalidArgument(
                "on-policy variance is zero; ratio undefined".into(),
            ));
        }
        sum += var_mu / var_pi;
    }
    Ok(sum / prepared.len() as f64)
}

pub fn variance_ratio_to_csv(rows: &[VarianceRatioRow]) -> String {
    let mut out = String::from("n,ratio\n");
    for row in rows {
        let _ = writeln!(out, "{},{}", row.n, row.ratio);
    }
    out
}

/// Per-episode CSV log of an adaptive run.
pub fn adaptive_log_to_csv(episodes: &[crate::adaptive::EpisodeRecord]) -> String {
    let mut out = String::from("episode,arm,G,neg_G_sq,J_so_far\n");
    for e in episodes {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.episode, e.arm, e.g, e.neg_g_sq, e.j_so_far
        );
    }
    out
}

/// Pipeline manifest: enough to regenerate and verify a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

/// Run the whole protocol and write every artifact into `out_dir`:
/// environment, target policies, offline dataset, trained models, learned
/// behavior policies, error curves, variance ratio, a sample adaptive log,
/// and the manifest.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, contents: &str| -> Result<()> {
        std::fs::write(out_dir.join(name), contents)?;
        outputs.push(name.to_string());
        Ok(())
    };

    let mdp = build_env(config)?;
    emit("env.json", &mdp.to_json_string()?)?;

    let dataset = build_offline_dataset(config, &mdp)?;
    emit("dataset.csv", &dataset_to_csv(&dataset))?;

    let prepared = prepare_policies(config, &mdp)?;
    for (p, policy) in prepared.iter().enumerate() {
        emit(&format!("policy_{p:03}.json"), &policy.pi.to_json_string()?)?;
        emit(
            &format!("mu_hat_{p:03}.json"),
            &policy.learned.mu_hat.to_json_string()?,
        )?;
        emit(
            &format!("model_r_{p:03}.json"),
            &policy.learned.w_r.to_json_string()?,
        )?;
        emit(
            &format!("model_q_{p:03}.json"),
            &policy.learned.w_q.to_json_string()?,
        )?;
        emit(
            &format!("model_q_hat_{p:03}.json"),
            &policy.learned.w_q_hat.to_json_string()?,
        )?;
    }

    let curve = error_curve_prepared(config, &mdp, &prepared)?;
    emit("error_curve.csv", &error_curve_to_csv(&curve))?;

    let ratio = vec![VarianceRatioRow {
        n: config.n,
        ratio: mean_variance_ratio(&mdp, &prepared)?,
    }];
    emit("variance_ratio.csv", &variance_ratio_to_csv(&ratio))?;

    // Sample adaptive log: first policy, a dedicated child stream.
    let episodes = config.online_steps / mdp.horizon();
    let mut rng = RngSeed(derive_seed(config.seed, STREAM_RUNS))
        .child(u64::MAX)
        .stream();
    let sample = run_adaptive(
        &mdp,
        &prepared[0].pi,
        &prepared[0].learned.mu_hat,
        episodes,
        config.ucb_c,
        &mut rng,
    )?;
    emit("adaptive_log.csv", &adaptive_log_to_csv(&sample.episodes))?;

    let manifest = Manifest {
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        outputs,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Pull fraction of the target arm in an adaptive run (used by safety
/// checks).
pub fn target_pull_fraction(result: &crate::adaptive::AdaptiveRunResult) -> f64 {
    result.pull_fraction(Arm::Target)
}
