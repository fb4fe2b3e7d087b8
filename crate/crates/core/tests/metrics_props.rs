use std::collections::BTreeMap;

use proptest::prelude::*;
use rulemap_core::bench::metrics::metric_value;
use rulemap_core::bench::{confusion, fmt2, metrics, round_half_up, ConfusionCounts, MetricId};

/// Half-up two-decimal rounding of num/den in integer arithmetic.
fn ratio2(num: u64, den: u64) -> String {
    let hundredths = (200 * num + den) / (2 * den);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..300, 0u64..300, 0u64..300, 0u64..300)
        .prop_map(|(a, b, c, d)| ConfusionCounts::new(a, b, c, d))
}

#[test]
fn anchors() {
    let cases = [
        ((8, 5, 88, 1), ["0.62", "0.89", "0.94"]),
        ((8, 7, 86, 1), ["0.53", "0.89", "0.92"]),
        ((0, 1, 92, 9), ["0.00", "0.00", "0.90"]),
    ];
    for ((tp, fp, tn, fn_), want) in cases {
        let m = metrics(&ConfusionCounts::new(tp, fp, tn, fn_));
        assert_eq!(
            [fmt2(m.precision), fmt2(m.recall), fmt2(m.accuracy)],
            want,
            "{tp},{fp},{tn},{fn_}"
        );
    }
    // κ by hand: p_o = 96/102, p_e = (13·9 + 93·89)/102², κ = 1398/2010
    let k = metrics(&ConfusionCounts::new(8, 5, 88, 1)).kappa;
    assert!((k - 0.6956).abs() < 0.001, "{k}");
    assert!((k - 1398.0 / 2010.0).abs() < 1e-12);
}

#[test]
fn half_up_at_ties() {
    assert_eq!(fmt2(0.625), "0.63");
    assert_eq!(fmt2(0.615), "0.62");
    assert_eq!(fmt2(0.125), "0.13");
    assert_eq!(round_half_up(0.69552, 4), 0.6955);
    assert_eq!(round_half_up(2.5, 0), 3.0);
}

#[test]
fn zero_denominators_flagged() {
    let m = metrics(&ConfusionCounts::new(0, 0, 10, 0));
    assert_eq!(m.precision, 0.0);
    assert_eq!(m.recall, 0.0);
    assert!(m.undefined_flags.contains(&MetricId::Precision));
    assert!(m.undefined_flags.contains(&MetricId::Recall));
    assert!(!m.undefined_flags.contains(&MetricId::Accuracy));
    let empty = metrics(&ConfusionCounts::default());
    assert_eq!(empty.undefined_flags.len(), MetricId::ALL.len());
}

#[test]
fn join_requires_gold_for_every_prediction() {
    let gold: BTreeMap<String, bool> = [("a".to_string(), true)].into();
    let preds: BTreeMap<String, bool> = [("a".to_string(), true), ("b".to_string(), false)].into();
    assert_eq!(confusion(&preds, &gold).unwrap_err().missing, ["b"]);
}

proptest! {
    #[test]
    fn counts_sum_to_n(pairs in prop::collection::vec(any::<(bool, bool)>(), 0..200)) {
        let c = ConfusionCounts::from_pairs(&pairs);
        prop_assert_eq!(c.n(), pairs.len() as u64);
    }

    #[test]
    fn rounded_values_match_integer_oracle(c in counts()) {
        let m = metrics(&c);
        if c.tp + c.fp > 0 {
            prop_assert_eq!(fmt2(m.precision), ratio2(c.tp, c.tp + c.fp));
        }
        if c.tp + c.fn_ > 0 {
            prop_assert_eq!(fmt2(m.recall), ratio2(c.tp, c.tp + c.fn_));
        }
        if c.n() > 0 {
            prop_assert_eq!(fmt2(m.accuracy), ratio2(c.tp + c.tn, c.n()));
        }
    }

    #[test]
    fn f_scores(c in counts()) {
        let m = metrics(&c);
        let (p, r) = (m.precision, m.recall);
        if p + r > 0.0 {
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            prop_assert!(m.f1 <= p.max(r) + 1e-12 && m.f1 >= p.min(r) - 1e-12);
            prop_assert_eq!(m.f2 >= m.f1 - 1e-12, r >= p - 1e-12);
        }
    }

    #[test]
    fn bounded_metrics(c in counts()) {
        let m = metrics(&c);
        for id in MetricId::ALL {
            let v = m.get(id);
            let lo = if id == MetricId::Kappa { -1.0 } else { 0.0 };
            prop_assert!(v >= lo - 1e-12 && v <= 1.0 + 1e-12, "{id} = {v}");
            prop_assert_eq!(metric_value(&c, id).is_none(), m.undefined_flags.contains(&id));
        }
        if !m.undefined_flags.contains(&MetricId::BalancedAccuracy) {
            let spec = c.tn as f64 / (c.tn + c.fp) as f64;
            prop_assert!((m.balanced_accuracy - (m.recall + spec) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_is_one_exactly_for_perfect_agreement(c in counts()) {
        if let Some(k) = metric_value(&c, MetricId::Kappa) {
            let perfect = c.fp == 0 && c.fn_ == 0;
            prop_assert_eq!((k - 1.0).abs() < 1e-12, perfect);
        }
    }

    #[test]
    fn kappa_matches_marginals(c in counts()) {
        prop_assume!(c.n() > 0);
        let n = c.n() as f64;
        let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let po = (tp + tn) / n;
        let pe = ((tp + fp) / n) * ((tp + fn_) / n) + ((tn + fn_) / n) * ((tn + fp) / n);
        if (1.0 - pe).abs() > 1e-12 {
            let k = metrics(&c).kappa;
            prop_assert!((k - (po - pe) / (1.0 - pe)).abs() < 1e-9);
        }
    }
}
