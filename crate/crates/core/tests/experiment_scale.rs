//! Larger-scale experiment checks that stay within a test-suite budget.

use offmc::experiment::{variance_ratio, ExperimentConfig};
use offmc::learn::FeatureKind;

/// Linear-time features keep reducing variance on a 20x20 world even
/// though the representation is far from tabular fidelity.
#[test]
fn n20_linear_features_still_reduce_variance() {
    let config = ExperimentConfig {
        seed: 20,
        num_policies: 2,
        sizes: vec![20],
        feature_kind: FeatureKind::LinearTime,
        ..ExperimentConfig::default()
    };
    let rows = variance_ratio(&config).unwrap();
    assert_eq!(rows[0].n, 20);
    assert!(
        rows[0].ratio < 1.0,
        "n=20 linear ratio {} not below 1",
        rows[0].ratio
    );
}
