//! Monte Carlo behavior of the estimators against exact ground truth.

mod common;

use common::{random_policy_for, random_tiny_mdp};
use offmc::adaptive::run_adaptive;
use offmc::dp::{brute_force_moments, pdis_variance_total, EstimatorKind};
use offmc::estimators::{ois_return, pdis_return, EstimateAccumulator};
use offmc::mdp::sample_trajectory;
use offmc::rng::RngSeed;

/// Empirical estimator variances over sampled trajectories reproduce the
/// ordering that enumeration establishes for the same instance.
#[test]
fn empirical_variances_match_enumerated_ordering() {
    let mut rng = RngSeed(301).stream();
    let (mdp, pi, mu) = loop {
        let mdp = random_tiny_mdp(&mut rng);
        if mdp.horizon() < 2 {
            continue;
        }
        let pi = random_policy_for(&mdp, &mut rng);
        let mu = random_policy_for(&mdp, &mut rng);
        let pdis = brute_force_moments(&mdp, &pi, &mu, EstimatorKind::Pdis).unwrap();
        let ois = brute_force_moments(&mdp, &pi, &mu, EstimatorKind::OrdinaryIs).unwrap();
        // Work on an instance where the oracle confirms a clear gap.
        let margin: f64 = (0..mdp.num_states())
            .map(|s| ois.variance[s] - pdis.variance[s])
            .fold(f64::INFINITY, f64::min);
        if margin > 0.05 {
            break (mdp, pi, mu);
        }
    };

    let n = 100_000;
    let mut pdis_acc = EstimateAccumulator::new();
    let mut ois_acc = EstimateAccumulator::new();
    for _ in 0..n {
        let traj = sample_trajectory(&mdp, &mu, &mut rng).unwrap();
        pdis_acc.update(pdis_return(&traj, &pi, &mu).unwrap());
        ois_acc.update(ois_return(&traj, &pi, &mu).unwrap());
    }
    assert!(
        ois_acc.variance() > pdis_acc.variance(),
        "empirical OIS variance {} did not exceed PDIS variance {}",
        ois_acc.variance(),
        pdis_acc.variance()
    );
    // Both sample means agree with each other within Monte Carlo noise.
    let se = (ois_acc.variance() / n as f64).sqrt();
    assert!((ois_acc.mean() - pdis_acc.mean()).abs() < 4.0 * se);
}

/// The pooled adaptive estimate is unbiased over repeated seeded runs: both
/// arms produce unbiased PDIS returns, so mixing them cannot bias the mean.
#[test]
fn adaptive_estimate_is_unbiased_over_repeats() {
    let mut rng = RngSeed(302).stream();
    let (mdp, pi) = loop {
        let mdp = random_tiny_mdp(&mut rng);
        if mdp.horizon() >= 2 && mdp.num_actions() >= 2 {
            let pi = random_policy_for(&mdp, &mut rng);
            break (mdp, pi);
        }
    };
    let mu_hat =
        offmc::mdp::TimedPolicy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let exact: f64 = {
        let values = offmc::dp::compute_q_v(&mdp, &pi);
        mdp.initial()
            .iter()
            .zip(&values.v[0])
            .map(|(&p, &v)| p * v)
            .sum()
    };

    let repeats = 400;
    let episodes = 50;
    let mut estimates = EstimateAccumulator::new();
    for rep in 0..repeats {
        let mut run_rng = RngSeed(303).child(rep).stream();
        let result =
            run_adaptive(&mdp, &pi, &mu_hat, episodes, 2f64.powi(-10), &mut run_rng).unwrap();
        estimates.update(result.estimate);
    }
    let se = (estimates.variance() / repeats as f64).sqrt();
    assert!(
        (estimates.mean() - exact).abs() <= 3.0 * se + 1e-12,
        "adaptive mean {} vs exact {exact} (se {se})",
        estimates.mean()
    );
}

/// With a deliberately corrupted behavior policy whose exact variance is
/// worse than on-policy, the bandit concentrates on the target arm and the
/// per-episode regret rate decays.
#[test]
fn corrupted_behavior_policy_is_abandoned() {
    // A peaked target policy has low on-policy variance; the uniform policy
    // inflates it through large importance ratios.
    let mdp = offmc::mdp::TabularMDP::new(
        2,
        2,
        3,
        vec![vec![1.0, 0.1], vec![0.2, 0.9]],
        vec![
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![vec![0.4, 0.6], vec![0.6, 0.4]],
        ],
        vec![0.5, 0.5],
    )
    .unwrap();
    let peaked = |hi: f64| vec![hi, 1.0 - hi];
    let pi = offmc::mdp::TimedPolicy::new(vec![
        vec![peaked(0.95), peaked(0.05)],
        vec![peaked(0.9), peaked(0.1)],
        vec![peaked(0.95), peaked(0.9)],
    ])
    .unwrap();
    let corrupted = offmc::mdp::TimedPolicy::uniform(3, 2, 2);

    let var_pi = pdis_variance_total(&mdp, &pi, &pi).unwrap();
    let var_mu = pdis_variance_total(&mdp, &pi, &corrupted).unwrap();
    assert!(
        var_mu > var_pi * 1.5,
        "instance must make the corrupted arm clearly worse: {var_mu} vs {var_pi}"
    );

    for seed in 0..5 {
        let mut rng = RngSeed(304).child(seed).stream();
        let result = run_adaptive(&mdp, &pi, &corrupted, 8192, 2f64.powi(-10), &mut rng).unwrap();
        let regret = offmc::adaptive::empirical_regret(&result.episodes, var_mu, var_pi);
        let rates: Vec<f64> = [128usize, 512, 2048, 8192]
            .iter()
            .map(|&k| regret[k - 1] / k as f64)
            .collect();
        assert!(
            rates.windows(2).all(|w| w[1] < w[0]),
            "regret rate not decreasing on seed {seed}: {rates:?}"
        );
        assert!(
            result.pull_fraction(offmc::adaptive::Arm::Target) > 0.9,
            "target arm fraction too low on seed {seed}"
        );
    }
}
