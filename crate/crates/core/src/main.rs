//! Command-line driver for the grid-world evaluation experiments.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use offmc::adaptive::{run_adaptive, Arm};
use offmc::dataset::{load_dataset, save_dataset};
use offmc::dp::pdis_variance_total;
use offmc::experiment::{
    adaptive_log_to_csv, build_offline_dataset, error_curve, error_curve_to_csv, exact_value,
    run_pipeline, variance_ratio, variance_ratio_to_csv, ExperimentConfig,
};
use offmc::gridworld::{features_for, make_gridworld, random_policy, GridWorldSpec};
use offmc::learn::{augment, tune, FeatureKind, TrainConfig};
use offmc::mdp::{TabularMDP, TimedPolicy};
use offmc::rng::{derive_seed, RngSeed};

#[derive(Parser)]
#[command(
    name = "offmc",
    about = "Variance-reduced off-policy Monte Carlo evaluation on grid worlds",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random grid-world environment file.
    GenEnv(GenEnvArgs),
    /// Generate an offline dataset of logged tuples.
    GenOffline(GenOfflineArgs),
    /// Learn a behavior policy from an offline dataset.
    Train(TrainArgs),
    /// Normalized estimation-error curves for the three online estimators.
    ErrorCurve(CurveArgs),
    /// Exact variance ratios of the learned behavior policy vs the target.
    VarianceRatio(CurveArgs),
    /// Run the adaptive (UCB) evaluator and emit its episode log.
    Adaptive(AdaptiveArgs),
    /// Run the full experiment pipeline into a directory.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    /// Grid size (width = height = horizon).
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Intended-move probability.
    #[arg(long, default_value_t = 0.9)]
    slip: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenOfflineArgs {
    #[arg(long)]
    env: PathBuf,
    /// Number of tuples to generate.
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long)]
    seed: u64,
    /// How many anonymous random behavior policies generate the data.
    #[arg(long, default_value_t = 5)]
    num_behavior_policies: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PolicySource {
    /// Target policy file.
    #[arg(long, conflicts_with = "policy_seed")]
    policy: Option<PathBuf>,
    /// Generate the target policy from this seed instead.
    #[arg(long)]
    policy_seed: Option<u64>,
    /// Where to save a generated target policy.
    #[arg(long)]
    save_policy: Option<PathBuf>,
}

impl PolicySource {
    fn resolve(&self, mdp: &TabularMDP) -> Result<TimedPolicy> {
        let policy = match (&self.policy, self.policy_seed) {
            (Some(path), _) => TimedPolicy::load(path)
                .with_context(|| format!("loading policy {}", path.display()))?,
            (None, Some(seed)) => random_policy(mdp, seed),
            (None, None) => bail!("either --policy or --policy-seed is required"),
        };
        if !policy.matches_shape(mdp) {
            bail!(
                "policy shape ({}, {}, {}) does not match the environment ({}, {}, {})",
                policy.horizon(),
                policy.num_states(),
                policy.num_actions(),
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            );
        }
        if let Some(path) = &self.save_policy {
            policy.save(path)?;
        }
        Ok(policy)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    policy: PolicySource,
    #[arg(long, value_enum, default_value = "tabular")]
    feature_kind: FeatureKindArg,
    /// JSON file with an array of training configurations to tune over.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Learning rate for all three stages (single-config mode).
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 200_000)]
    steps_per_stage: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Row-relative policy floor; defaults per feature kind.
    #[arg(long)]
    q_hat_floor: Option<f64>,
    /// Seed for splitting, minibatch sampling, and augmentation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FeatureKindArg {
    Tabular,
    LinearTime,
}

impl From<FeatureKindArg> for FeatureKind {
    fn from(kind: FeatureKindArg) -> Self {
        match kind {
            FeatureKindArg::Tabular => FeatureKind::Tabular,
            FeatureKindArg::LinearTime => FeatureKind::LinearTime,
        }
    }
}

#[derive(Args)]
struct CurveArgs {
    /// Experiment config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_policies: Option<usize>,
    #[arg(long)]
    runs_per_policy: Option<usize>,
    #[arg(long)]
    online_steps: Option<usize>,
    #[arg(long)]
    offline_tuples: Option<usize>,
    #[arg(long, value_enum)]
    feature_kind: Option<FeatureKindArg>,
    #[arg(long)]
    ucb_c: Option<f64>,
    /// Grid sizes for the variance-ratio report.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

impl CurveArgs {
    fn build_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                ExperimentConfig::from_json_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.n {
            config.n = n;
            if self.config.is_none() && self.sizes.is_none() {
                config.sizes = vec![n];
            }
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(x) = self.num_policies {
            config.num_policies = x;
        }
        if let Some(x) = self.runs_per_policy {
            config.runs_per_policy = x;
        }
        if let Some(x) = self.online_steps {
            config.online_steps = x;
        }
        if let Some(x) = self.offline_tuples {
            config.offline_tuples = x;
        }
        if let Some(kind) = self.feature_kind {
            config.feature_kind = kind.into();
        }
        if let Some(c) = self.ucb_c {
            config.ucb_c = c;
        }
        if let Some(sizes) = &self.sizes {
            config.sizes = sizes.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct AdaptiveArgs {
    #[arg(long)]
    env: PathBuf,
    #[command(flatten)]
    policy: PolicySource,
    /// Learned behavior policy file.
    #[arg(long)]
    mu_hat: PathBuf,
    #[arg(long)]
    episodes: usize,
    /// UCB exploration constant.
    #[arg(long, default_value_t = 2f64.powi(-10))]
    c: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (required; everything is derived from it).
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn cmd_gen_env(args: &GenEnvArgs) -> Result<()> {
    let mdp = make_gridworld(&GridWorldSpec {
        n: args.n,
        slip: args.slip,
        seed: args.seed,
    })
    .context("gen-env")?;
    mdp.save(&args.out).context("gen-env: writing output")?;
    println!(
        "wrote {} ({} states, {} actions, horizon {})",
        args.out.display(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.horizon()
    );
    Ok(())
}

fn cmd_gen_offline(args: &GenOfflineArgs) -> Result<()> {
    let mdp = TabularMDP::load(&args.env).context("gen-offline: loading env")?;
    // Only the seed and count fields matter here; the dataset comes from
    // the loaded environment, not a generated one.
    let config = ExperimentConfig {
        seed: args.seed,
        offline_tuples: args.m,
        num_behavior_policies: args.num_behavior_policies,
        ..ExperimentConfig::default()
    };
    let dataset = build_offline_dataset(&config, &mdp).context("gen-offline")?;
    save_dataset(&args.out, &dataset).context("gen-offline: writing output")?;
    println!("wrote {} ({} tuples)", args.out.display(), dataset.len());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mdp = TabularMDP::load(&args.env).context("train: loading env")?;
    let pi = args.policy.resolve(&mdp).context("train: target policy")?;
    let dataset = load_dataset(&args.dataset).context("train: loading dataset")?;
    let grid: Vec<TrainConfig> = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("train: reading grid {}", path.display()))?;
            serde_json::from_str(&text).context("train: parsing grid")?
        }
        None => {
            let base = TrainConfig::for_features(args.feature_kind.into());
            vec![TrainConfig {
                lr_r: args.lr,
                lr_q: args.lr,
                lr_q_hat: args.lr,
                batch_size: args.batch_size,
                steps_per_stage: args.steps_per_stage,
                seed: args.seed,
                q_hat_floor: args.q_hat_floor.unwrap_or(base.q_hat_floor),
                ..base
            }]
        }
    };
    let features = features_for(&mdp, args.feature_kind.into());
    let mut rng = RngSeed(derive_seed(args.seed, 0xA06)).stream();
    let augmented = augment(&dataset, &pi, &mut rng);
    let (chosen, learned) = tune(&augmented, &pi, &features, &grid).context("train: tuning")?;

    std::fs::create_dir_all(&args.out_dir).context("train: creating output dir")?;
    let write = |name: &str, contents: String| -> Result<()> {
        std::fs::write(args.out_dir.join(name), contents)
            .with_context(|| format!("train: writing {name}"))
    };
    write("model_r.json", learned.w_r.to_json_string()?)?;
    write("model_q.json", learned.w_q.to_json_string()?)?;
    write("model_q_hat.json", learned.w_q_hat.to_json_string()?)?;
    write("mu_hat.json", learned.mu_hat.to_json_string()?)?;
    write("chosen_config.json", serde_json::to_string_pretty(&chosen)?)?;
    println!(
        "trained mu_hat into {} (final test loss {:.6})",
        args.out_dir.display(),
        learned.final_test_loss
    );
    Ok(())
}

fn cmd_error_curve(args: &CurveArgs) -> Result<()> {
    let config = args.build_config().context("error-curve: config")?;
    let rows = error_curve(&config).context("error-curve")?;
    std::fs::write(&args.out, error_curve_to_csv(&rows)).context("error-curve: writing output")?;
    println!("wrote {} ({} rows)", args.out.display(), rows.len());
    Ok(())
}

fn cmd_variance_ratio(args: &CurveArgs) -> Result<()> {
    let config = args.build_config().context("variance-ratio: config")?;
    let rows = variance_ratio(&config).context("variance-ratio")?;
    std::fs::write(&args.out, variance_ratio_to_csv(&rows))
        .context("variance-ratio: writing output")?;
    for row in &rows {
        println!("n={} ratio={:.6}", row.n, row.ratio);
    }
    Ok(())
}

fn cmd_adaptive(args: &AdaptiveArgs) -> Result<()> {
    let mdp = TabularMDP::load(&args.env).context("adaptive: loading env")?;
    let pi = args
        .policy
        .resolve(&mdp)
        .context("adaptive: target policy")?;
    let mu_hat = TimedPolicy::load(&args.mu_hat).context("adaptive: loading mu_hat")?;
    if !mu_hat.matches_shape(&mdp) {
        bail!("adaptive: mu_hat shape does not match the environment");
    }
    let mut rng = RngSeed(args.seed).stream();
    let result =
        run_adaptive(&mdp, &pi, &mu_hat, args.episodes, args.c, &mut rng).context("adaptive")?;
    std::fs::write(&args.out, adaptive_log_to_csv(&result.episodes))
        .context("adaptive: writing output")?;
    let var_mu = pdis_variance_total(&mdp, &pi, &mu_hat).context("adaptive: variance")?;
    let var_pi = pdis_variance_total(&mdp, &pi, &pi).context("adaptive: variance")?;
    println!(
        "estimate J = {:.6} (exact {:.6}); pulls: mu-hat {:.1}%, pi {:.1}%; exact variances: mu-hat {:.4}, pi {:.4}",
        result.estimate,
        exact_value(&mdp, &pi),
        100.0 * result.pull_fraction(Arm::Learned),
        100.0 * result.pull_fraction(Arm::Target),
        var_mu,
        var_pi
    );
    Ok(())
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("pipeline: reading config {}", path.display()))?;
            ExperimentConfig::from_json_str(&text).context("pipeline: config")?
        }
        None => ExperimentConfig::default(),
    };
    config.seed = args.seed;
    let manifest = run_pipeline(&config, &args.out_dir).context("pipeline")?;
    println!(
        "pipeline complete: {} artifacts in {} (config hash {})",
        manifest.outputs.len() + 1,
        args.out_dir.display(),
        manifest.config_hash
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenEnv(args) => cmd_gen_env(args),
        Command::GenOffline(args) => cmd_gen_offline(args),
        Command::Train(args) => cmd_train(args),
        Command::ErrorCurve(args) => cmd_error_curve(args),
        Command::VarianceRatio(args) => cmd_variance_ratio(args),
        Command::Adaptive(args) => cmd_adaptive(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
