mod common;

use std::time::Instant;

use common::{accuracy, oracle_ci, pairs_868, precision, recall};
use rulemap_core::bench::bootstrap::resample_counts;
use rulemap_core::bench::{bootstrap_ci, quantile_type7, MetricId};

#[test]
fn matches_independent_oracle_on_868_cases() {
    let pairs = pairs_868();
    assert_eq!(pairs.len(), 868);
    let t = Instant::now();
    for (id, f) in [
        (
            MetricId::Precision,
            precision as fn(u64, u64, u64, u64) -> f64,
        ),
        (MetricId::Recall, recall),
        (MetricId::Accuracy, accuracy),
    ] {
        let ci = bootstrap_ci(&pairs, id, 10_000, 640, 0.95);
        let again = bootstrap_ci(&pairs, id, 10_000, 640, 0.95);
        assert_eq!(
            (ci.lo, ci.hi),
            (again.lo, again.hi),
            "{id} not reproducible"
        );
        let (lo, hi) = oracle_ci(&pairs, f, 10_000, 640);
        eprintln!(
            "{id}: crate [{:.4}, {:.4}] oracle [{lo:.4}, {hi:.4}]",
            ci.lo, ci.hi
        );
        assert!(
            (ci.lo - lo).abs() <= 0.005 && (ci.hi - hi).abs() <= 0.005,
            "{id}"
        );
    }
    assert!(t.elapsed().as_secs_f64() < 30.0, "{:?}", t.elapsed());
}

#[test]
fn seed_changes_draws() {
    let pairs: Vec<(bool, bool)> = (0..200).map(|i| (i % 3 == 0, i % 5 < 2)).collect();
    assert_eq!(
        resample_counts(&pairs, 50, 1),
        resample_counts(&pairs, 50, 1)
    );
    assert_ne!(
        resample_counts(&pairs, 50, 1),
        resample_counts(&pairs, 50, 2)
    );
}

#[test]
fn type7_quantile() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(quantile_type7(&xs, 0.0), 1.0);
    assert_eq!(quantile_type7(&xs, 1.0), 5.0);
    assert_eq!(quantile_type7(&xs, 0.5), 3.0);
    assert!((quantile_type7(&xs, 0.1) - 1.4).abs() < 1e-12);
}
