//! Case-level percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metric_value, ConfusionCounts, MetricId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: u32,
    pub seed: u64,
    /// Always `"percentile"`.
    pub method: String,
    /// Quantile estimator over the sorted resample values.
    pub quantile: String,
    /// Resamples whose metric had a zero denominator (counted as 0).
    pub degenerate_resamples: u32,
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Confusion counts of `resamples` case-level resamples drawn with
/// replacement from `pairs`, deterministic in `seed`.
pub fn resample_counts(pairs: &[(bool, bool)], resamples: u32, seed: u64) -> Vec<ConfusionCounts> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = pairs.len();
    (0..resamples)
        .map(|_| {
            let mut c = ConfusionCounts::default();
            for _ in 0..n {
                let (p, g) = pairs[rng.gen_range(0..n)];
                c.add(p, g);
            }
            c
        })
        .collect()
}

fn interval(
    samples: &[ConfusionCounts],
    metric: MetricId,
    seed: u64,
    level: f64,
) -> ConfidenceInterval {
    let mut degenerate = 0;
    let mut values: Vec<f64> = samples
        .iter()
        .map(|c| {
            metric_value(c, metric).unwrap_or_else(|| {
                degenerate += 1;
                0.0
            })
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    ConfidenceInterval {
        lo: quantile_type7(&values, alpha),
        hi: quantile_type7(&values, 1.0 - alpha),
        level,
        resamples: samples.len() as u32,
        seed,
        method: "percentile".into(),
        quantile: "type7".into(),
        degenerate_resamples: degenerate,
    }
}

/// Resamples `(predicted, gold)` pairs with replacement and returns the
/// percentile interval of `metric` at `level`.
///
/// # Panics
/// On an empty `pairs` slice or `resamples == 0`.
pub fn bootstrap_ci(
    pairs: &[(bool, bool)],
    metric: MetricId,
    resamples: u32,
    seed: u64,
    level: f64,
) -> ConfidenceInterval {
    bootstrap_cis(pairs, &[metric], resamples, seed, level).remove(0)
}

/// Like [`bootstrap_ci`] for several metrics over the same resamples.
pub fn bootstrap_cis(
    pairs: &[(bool, bool)],
    metrics: &[MetricId],
    resamples: u32,
    seed: u64,
    level: f64,
) -> Vec<ConfidenceInterval> {
    assert!(!pairs.is_empty(), "bootstrap needs at least one prediction");
    assert!(resamples > 0, "bootstrap needs at least one resample");
    let samples = resample_counts(pairs, resamples, seed);
    metrics
        .iter()
        .map(|m| interval(&samples, *m, seed, level))
        .collect()
}
