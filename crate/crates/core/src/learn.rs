//! Offline learning of the low-variance behavior policy from
//! behavior-agnostic logged tuples.
//!
//! The pipeline mirrors the derived-reward construction in [`crate::dp`]:
//! regress the reward, fit the action value `q` by semi-gradient TD, derive
//! the square-compatible reward `2 r_w q_w - r_w^2` from the two models, fit
//! its action value `q^`, and finally normalize `pi sqrt(q^)` into a policy.
//! Every stage runs minibatch SGD with sampling-with-replacement from the
//! train split; the terminal bootstrap is zero, so the final-step TD target
//! is the (derived) reward alone.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMDP, TimedPolicy};
use crate::rng::{categorical, RngSeed};

/// One behavior-agnostic logged transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineTuple {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    /// Filled by [`augment`]; absent for final-step tuples.
    pub a_next: Option<usize>,
}

/// Feature construction for the linear models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// One distinct one-hot coordinate per `(t, s, a)` triple.
    Tabular,
    /// Per-action weight blocks over a state one-hot plus a normalized-time
    /// coordinate `t / T`.
    LinearTime,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureKind::Tabular => write!(f, "tabular"),
            FeatureKind::LinearTime => write!(f, "linear-time"),
        }
    }
}

/// Maps `(t, s, a)` triples (and `(s, a)` pairs for the reward model) to
/// sparse feature activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, mdp: &TabularMDP) -> Self {
        FeatureMap {
            kind,
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
        }
    }

    /// Per-`(t, s)` feature length: `T * |S|` coordinates per action for the
    /// tabular map (via distinct one-hots), `|S| + 1` for linear-time.
    pub fn dims(&self) -> usize {
        match self.kind {
            FeatureKind::Tabular => self.horizon * self.num_states,
            FeatureKind::LinearTime => self.num_states + 1,
        }
    }

    /// Total weight count of an action-value model: `dims * |A|`.
    pub fn q_weight_count(&self) -> usize {
        self.dims() * self.num_actions
    }

    /// Weight count of the reward model: one coordinate per `(s, a)` pair.
    pub fn r_weight_count(&self) -> usize {
        self.num_states * self.num_actions
    }

    /// Sparse activations of the action-value features at `(t, s, a)`:
    /// at most two `(index, value)` pairs. Zero-valued entries pad the
    /// fixed-size result and contribute nothing.
    pub fn q_activations(&self, t: usize, s: usize, a: usize) -> [(usize, f64); 2] {
        match self.kind {
            FeatureKind::Tabular => {
                let idx = (t * self.num_states + s) * self.num_actions + a;
                [(idx, 1.0), (idx, 0.0)]
            }
            FeatureKind::LinearTime => {
                let block = a * (self.num_states + 1);
                [
                    (block + s, 1.0),
                    (block + self.num_states, t as f64 / self.horizon as f64),
                ]
            }
        }
    }

    pub fn r_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }
}

/// A weight vector over a feature map; the reward, `q`, and `q^` models are
/// all instances of this type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: FeatureKind,
    pub dims: usize,
    pub weights: Vec<f64>,
}

impl LinearModel {
    fn zeros(kind: FeatureKind, dims: usize, len: usize) -> Self {
        LinearModel {
            kind,
            dims,
            weights: vec![0.0; len],
        }
    }

    /// Action-value prediction; `t == T` returns the terminal bootstrap 0.
    pub fn predict_q(&self, features: &FeatureMap, t: usize, s: usize, a: usize) -> f64 {
        if t >= features.horizon {
            return 0.0;
        }
        features
            .q_activations(t, s, a)
            .iter()
            .map(|&(i, x)| self.weights[i] * x)
            .sum()
    }

    /// Reward prediction over the `(s, a)` one-hot coordinates.
    pub fn predict_r(&self, features: &FeatureMap, s: usize, a: usize) -> f64 {
        self.weights[features.r_index(s, a)]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Hyperparameters for the three training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_r: f64,
    pub lr_q: f64,
    pub lr_q_hat: f64,
    pub batch_size: usize,
    pub steps_per_stage: usize,
    /// Fraction of the dataset used for training; the rest is the test split.
    pub train_fraction: f64,
    pub seed: u64,
    /// Row-relative floor applied to `q^` predictions inside the square
    /// root when the policy is built; preserves coverage of the target
    /// policy and bounds importance ratios by `1 / sqrt(q_hat_floor)`.
    pub q_hat_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_r: 0.1,
            lr_q: 0.1,
            lr_q_hat: 0.1,
            batch_size: 64,
            steps_per_stage: 200_000,
            train_fraction: 0.7,
            seed: 0,
            q_hat_floor: 1e-2,
        }
    }
}

impl TrainConfig {
    /// Defaults adjusted to the feature class. The tabular model is
    /// trustworthy on covered pairs, so a mild floor keeps the policy close
    /// to the exact one; the linear-time model extrapolates badly at late
    /// time steps (a line under a convex decreasing curve goes negative at
    /// the endpoint), so a stronger floor caps the damage of wrong
    /// nonpositive predictions.
    pub fn for_features(kind: FeatureKind) -> Self {
        TrainConfig {
            q_hat_floor: match kind {
                FeatureKind::Tabular => 1e-2,
                FeatureKind::LinearTime => 0.2,
            },
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.q_hat_floor < 0.0 {
            return Err(Error::InvalidArgument("q_hat_floor must be >= 0".into()));
        }
        if self.batch_size == 0 || self.steps_per_stage == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and steps_per_stage must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A trained stage: the model plus its mean squared loss on the test split.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: LinearModel,
    pub test_loss: f64,
}

/// Generate `m` logged tuples from a uniform mixture of behavior policies.
///
/// Per tuple the RNG consumes: one draw for the policy choice, one for the
/// time index, one for the initial state, then one action draw and one
/// transition draw per simulated step up to and including the recorded one.
/// The generating policy identity is not recorded.
pub fn generate_offline<R: Rng>(
    mdp: &TabularMDP,
    behavior_policies: &[TimedPolicy],
    m: usize,
    rng: &mut R,
) -> Result<Vec<OfflineTuple>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "offline dataset size m must be >= 1".into(),
        ));
    }
    if behavior_policies.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one behavior policy is required".into(),
        ));
    }
    for policy in behavior_policies {
        if !policy.matches_shape(mdp) {
            return Err(Error::DimensionMismatch(
                "behavior policy shape does not match mdp".into(),
            ));
        }
    }
    let horizon = mdp.horizon();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let which = (rng.gen::<f64>() * behavior_policies.len() as f64) as usize;
        let policy = &behavior_policies[which.min(behavior_policies.len() - 1)];
        let t = (rng.gen::<f64>() * horizon as f64) as usize;
        let t = t.min(horizon - 1);
        let mut s = categorical(rng, mdp.initial());
        for k in 0..t {
            let a = categorical(rng, policy.row(k, s));
            s = categorical(rng, mdp.transition_row(s, a));
        }
        let a = categorical(rng, policy.row(t, s));
        let s_next = categorical(rng, mdp.transition_row(s, a));
        out.push(OfflineTuple {
            t,
            s,
            a,
            r: mdp.reward(s, a),
            s_next,
            a_next: None,
        });
    }
    Ok(out)
}

/// Fill `a_next ~ pi_{t+1}(· | s_next)` for every tuple below the final
/// step; final-step tuples keep `a_next = None`.
///
/// One RNG draw per non-terminal tuple, in dataset order.
pub fn augment<R: Rng>(
    dataset: &[OfflineTuple],
    pi: &TimedPolicy,
    rng: &mut R,
) -> Vec<OfflineTuple> {
    let horizon = pi.horizon();
    dataset
        .iter()
        .map(|&tuple| {
            let a_next = if tuple.t + 1 < horizon {
                Some(categorical(rng, pi.row(tuple.t + 1, tuple.s_next)))
            } else {
                None
            };
            OfflineTuple { a_next, ..tuple }
        })
        .collect()
}

/// Deterministic shuffled train/test split of tuple indices.
fn split_indices(len: usize, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..len).collect();
    let mut rng = RngSeed(config.seed).child(0xA).stream();
    // Fisher-Yates, one draw per position.
    for i in (1..len).rev() {
        let j = (rng.gen::<f64>() * (i + 1) as f64) as usize;
        indices.swap(i, j.min(i));
    }
    let cut = ((len as f64 * config.train_fraction).round() as usize)
        .clamp(1, len.saturating_sub(1).max(1));
    let test = indices.split_off(cut.min(len));
    (indices, test)
}

fn check_finite(model: &LinearModel, stage: &'static str) -> Result<()> {
    if model.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingDiverged { stage })
    }
}

struct SgdStage<'a> {
    dataset: &'a [OfflineTuple],
    train: Vec<usize>,
    test: Vec<usize>,
    rng: ChaCha8Rng,
    batch_size: usize,
}

impl<'a> SgdStage<'a> {
    fn new(dataset: &'a [OfflineTuple], config: &TrainConfig, stage_tag: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (train, test) = split_indices(dataset.len(), config);
        Ok(SgdStage {
            dataset,
            train,
            test,
            rng: RngSeed(config.seed).child(stage_tag).stream(),
            batch_size: config.batch_size,
        })
    }

    fn sample_batch(&mut self) -> Vec<usize> {
        (0..self.batch_size)
            .map(|_| {
                let k = (self.rng.gen::<f64>() * self.train.len() as f64) as usize;
                self.train[k.min(self.train.len() - 1)]
            })
            .collect()
    }
}

/// Stage 2: regress the reward onto `(s, a)` one-hots.
pub fn fit_r(
    dataset: &[OfflineTuple],
    features: &FeatureMap,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    let mut stage = SgdStage::new(dataset, config, 0x52)?;
    let mut model = LinearModel::zeros(features.kind, features.dims(), features.r_weight_count());
    for step in 0..config.steps_per_stage {
        let batch = stage.sample_batch();
        let scale = config.lr_r / batch.len() as f64;
        let mut delta: Vec<(usize, f64)> = Vec::with_capacity(batch.len());
        for &i in &batch {
            let tuple = &stage.dataset[i];
            let idx = features.r_index(tuple.s, tuple.a);
            let err = tuple.r - model.weights[idx];
            delta.push((idx, err));
        }
        for (idx, err) in delta {
            model.weights[idx] += scale * err;
        }
        if step % 4096 == 0 {
            check_finite(&model, "reward regression")?;
        }
    }
    check_finite(&model, "reward regression")?;
    let test_loss = stage
        .test
        .iter()
        .map(|&i| {
            let tuple = &stage.dataset[i];
            let err = tuple.r - model.predict_r(features, tuple.s, tuple.a);
            err * err
        })
        .sum::<f64>()
        / stage.test.len().max(1) as f64;
    Ok(FitResult { model, test_loss })
}

fn require_augmented(dataset: &[OfflineTuple], horizon: usize) -> Result<()> {
    for (index, tuple) in dataset.iter().enumerate() {
        if tuple.t + 1 < horizon && tuple.a_next.is_none() {
            return Err(Error::MissingAugmentation { index });
        }
    }
    Ok(())
}

/// TD target for a `q`-style stage: immediate payoff plus the bootstrap at
/// `(t+1, s', a')`, zero past the horizon.
fn td_target(
    model: &LinearModel,
    features: &FeatureMap,
    tuple: &OfflineTuple,
    immediate: f64,
) -> f64 {
    match tuple.a_next {
        Some(a_next) => immediate + model.predict_q(features, tuple.t + 1, tuple.s_next, a_next),
        None => immediate,
    }
}

fn fit_td_stage(
    dataset: &[OfflineTuple],
    features: &FeatureMap,
    config: &TrainConfig,
    lr: f64,
    stage_tag: u64,
    stage_name: &'static str,
    immediate: impl Fn(&OfflineTuple) -> f64,
) -> Result<FitResult> {
    config.validate()?;
    require_augmented(dataset, features.horizon)?;
    let mut stage = SgdStage::new(dataset, config, stage_tag)?;
    let mut model = LinearModel::zeros(features.kind, features.dims(), features.q_weight_count());
    for step in 0..config.steps_per_stage {
        let batch = stage.sample_batch();
        let scale = lr / batch.len() as f64;
        // Semi-gradient: targets are computed with the pre-step weights.
        let mut grads: Vec<(usize, f64)> = Vec::with_capacity(batch.len() * 2);
        for &i in &batch {
            let tuple = &stage.dataset[i];
            let pred = model.predict_q(features, tuple.t, tuple.s, tuple.a);
            let err = td_target(&model, features, tuple, immediate(tuple)) - pred;
            for (idx, x) in features.q_activations(tuple.t, tuple.s, tuple.a) {
                if x != 0.0 {
                    grads.push((idx, err * x));
                }
            }
        }
        for (idx, g) in grads {
            model.weights[idx] += scale * g;
        }
        if step % 4096 == 0 {
            check_finite(&model, stage_name)?;
        }
    }
    check_finite(&model, stage_name)?;
    let test_loss = stage
        .test
        .iter()
        .map(|&i| {
            let tuple = &stage.dataset[i];
            let err = td_target(&model, features, tuple, immediate(tuple))
                - model.predict_q(features, tuple.t, tuple.s, tuple.a);
            err * err
        })
        .sum::<f64>()
        / stage.test.len().max(1) as f64;
    Ok(FitResult { model, test_loss })
}

/// Stage 3: fitted Q with the dataset reward as the immediate payoff.
pub fn fit_q(
    dataset: &[OfflineTuple],
    features: &FeatureMap,
    config: &TrainConfig,
) -> Result<FitResult> {
    fit_td_stage(
        dataset,
        features,
        config,
        config.lr_q,
        0x51,
        "q fitting",
        |tuple| tuple.r,
    )
}

/// Stage 4: fitted Q for the derived reward
/// `2 r_w(s,a) q_{w,t}(s,a) - r_w(s,a)^2` computed from the two trained
/// models.
pub fn fit_hat_q(
    dataset: &[OfflineTuple],
    w_r: &LinearModel,
    w_q: &LinearModel,
    features: &FeatureMap,
    config: &TrainConfig,
) -> Result<FitResult> {
    fit_td_stage(
        dataset,
        features,
        config,
        config.lr_q_hat,
        0x48,
        "q^ fitting",
        |tuple| {
            let r = w_r.predict_r(features, tuple.s, tuple.a);
            let q = w_q.predict_q(features, tuple.t, tuple.s, tuple.a);
            2.0 * r * q - r * r
        },
    )
}

/// Step 5: normalize `pi_t(a|s) sqrt(max(q^_w, floor * row_max))` into a
/// behavior policy, where `row_max` is the largest prediction in the row.
///
/// The floor is relative to the row scale: this keeps the support of the
/// result equal to the support of `pi` (so coverage holds regardless of
/// learning error) while bounding every importance ratio by
/// `1 / sqrt(floor)`. An absolute floor cannot do both: tiny floored
/// probabilities square into enormous exact-variance contributions whenever
/// the model wrongly predicts a nonpositive value for an action the target
/// policy actually uses. Rows whose predictions are all nonpositive (and
/// any row when `floor = 0` zeroes it out) fall back to `pi_t(·|s)`.
pub fn build_mu_hat(
    pi: &TimedPolicy,
    q_hat_model: &LinearModel,
    features: &FeatureMap,
    floor: f64,
) -> TimedPolicy {
    let (horizon, ns, na) = (pi.horizon(), pi.num_states(), pi.num_actions());
    let mut rows = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in 0..horizon {
        for s in 0..ns {
            let row_max = (0..na)
                .map(|a| q_hat_model.predict_q(features, t, s, a))
                .fold(0.0f64, f64::max);
            let row_floor = floor * row_max;
            let mut norm = 0.0;
            for a in 0..na {
                let q_hat = q_hat_model.predict_q(features, t, s, a).max(row_floor);
                rows[t][s][a] = pi.prob(t, s, a) * q_hat.max(0.0).sqrt();
                norm += rows[t][s][a];
            }
            if norm < 1e-300 {
                rows[t][s] = pi.row(t, s).to_vec();
            } else {
                for w in &mut rows[t][s] {
                    *w /= norm;
                }
            }
        }
    }
    TimedPolicy::new(rows).expect("mu^ rows are valid distributions")
}

/// The three trained models plus the assembled behavior policy.
#[derive(Debug, Clone)]
pub struct LearnedBehavior {
    pub w_r: LinearModel,
    pub w_q: LinearModel,
    pub w_q_hat: LinearModel,
    pub mu_hat: TimedPolicy,
    /// Test-split TD loss of the final stage (the tuning criterion), with
    /// the derived reward anchored to the logged rewards.
    pub final_test_loss: f64,
}

/// Final-stage TD loss on the test split with the derived reward built from
/// the logged reward instead of `r_w`. An all-zero model scores `E[r^4]`
/// here rather than a degenerate self-consistent zero.
fn anchored_hat_loss(
    dataset: &[OfflineTuple],
    test: &[usize],
    w_q: &LinearModel,
    w_q_hat: &LinearModel,
    features: &FeatureMap,
) -> f64 {
    test.iter()
        .map(|&i| {
            let tuple = &dataset[i];
            let q = w_q.predict_q(features, tuple.t, tuple.s, tuple.a);
            let immediate = 2.0 * tuple.r * q - tuple.r * tuple.r;
            let err = td_target(w_q_hat, features, tuple, immediate)
                - w_q_hat.predict_q(features, tuple.t, tuple.s, tuple.a);
            err * err
        })
        .sum::<f64>()
        / test.len().max(1) as f64
}

/// Run the full learning pipeline (stages 2-5) on an augmented dataset.
pub fn learn_behavior_policy(
    dataset: &[OfflineTuple],
    pi: &TimedPolicy,
    features: &FeatureMap,
    config: &TrainConfig,
) -> Result<LearnedBehavior> {
    let r_fit = fit_r(dataset, features, config)?;
    let q_fit = fit_q(dataset, features, config)?;
    let hat_fit = fit_hat_q(dataset, &r_fit.model, &q_fit.model, features, config)?;
    let mu_hat = build_mu_hat(pi, &hat_fit.model, features, config.q_hat_floor);
    let (_, test) = split_indices(dataset.len(), config);
    let final_test_loss = anchored_hat_loss(dataset, &test, &q_fit.model, &hat_fit.model, features);
    Ok(LearnedBehavior {
        w_r: r_fit.model,
        w_q: q_fit.model,
        w_q_hat: hat_fit.model,
        mu_hat,
        final_test_loss,
    })
}

/// Train every configuration in the grid and keep the one with the smallest
/// final-stage test loss; ties go to the earlier grid entry.
pub fn tune(
    dataset: &[OfflineTuple],
    pi: &TimedPolicy,
    features: &FeatureMap,
    grid: &[TrainConfig],
) -> Result<(TrainConfig, LearnedBehavior)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("tuning grid is empty".into()));
    }
    let mut best: Option<(TrainConfig, LearnedBehavior)> = None;
    for config in grid {
        let learned = learn_behavior_policy(dataset, pi, features, config)?;
        let better = match &best {
            Some((_, incumbent)) => learned.final_test_loss < incumbent.final_test_loss,
            None => true,
        };
        if better {
            best = Some((config.clone(), learned));
        }
    }
    Ok(best.expect("grid is nonempty"))
}
