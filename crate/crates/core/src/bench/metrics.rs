//! Confusion counts and the metrics derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (p, g) in pairs {
            c.add(*p, *g);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("predictions without gold label: {}", .missing.join(", "))]
pub struct JoinError {
    pub missing: Vec<String>,
}

/// Cross-tabulates predictions against gold. Every predicted id must have a
/// gold label.
pub fn confusion(
    predictions: &BTreeMap<String, bool>,
    gold: &BTreeMap<String, bool>,
) -> Result<ConfusionCounts, JoinError> {
    let missing: Vec<String> = predictions
        .keys()
        .filter(|id| !gold.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(JoinError { missing });
    }
    let mut c = ConfusionCounts::default();
    for (id, p) in predictions {
        c.add(*p, gold[id]);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Precision,
    Recall,
    Accuracy,
    F1,
    F2,
    BalancedAccuracy,
    Kappa,
}

impl MetricId {
    pub const ALL: [MetricId; 7] = [
        MetricId::Precision,
        MetricId::Recall,
        MetricId::Accuracy,
        MetricId::F1,
        MetricId::F2,
        MetricId::BalancedAccuracy,
        MetricId::Kappa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Precision => "precision",
            MetricId::Recall => "recall",
            MetricId::Accuracy => "accuracy",
            MetricId::F1 => "f1",
            MetricId::F2 => "f2",
            MetricId::BalancedAccuracy => "balanced_accuracy",
            MetricId::Kappa => "kappa",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// Value of a ratio, or `None` when the denominator is zero.
fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn f_beta(beta: f64, p: f64, r: f64) -> Option<f64> {
    let b2 = beta * beta;
    ratio((1.0 + b2) * p * r, b2 * p + r)
}

/// One metric; `None` means a zero denominator somewhere in its definition.
pub fn metric_value(c: &ConfusionCounts, id: MetricId) -> Option<f64> {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let n = c.n() as f64;
    let precision = || ratio(tp, tp + fp);
    let recall = || ratio(tp, tp + fn_);
    match id {
        MetricId::Precision => precision(),
        MetricId::Recall => recall(),
        MetricId::Accuracy => ratio(tp + tn, n),
        MetricId::F1 => f_beta(1.0, precision().unwrap_or(0.0), recall().unwrap_or(0.0)),
        MetricId::F2 => f_beta(2.0, precision().unwrap_or(0.0), recall().unwrap_or(0.0)),
        MetricId::BalancedAccuracy => {
            let specificity = ratio(tn, tn + fp);
            match (recall(), specificity) {
                (Some(r), Some(s)) => Some((r + s) / 2.0),
                _ => None,
            }
        }
        MetricId::Kappa => {
            if n == 0.0 {
                return None;
            }
            let p_o = (tp + tn) / n;
            let p_e = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (n * n);
            ratio(p_o - p_e, 1.0 - p_e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub f2: f64,
    pub balanced_accuracy: f64,
    pub kappa: f64,
    pub undefined_flags: BTreeSet<MetricId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ci: BTreeMap<MetricId, super::bootstrap::ConfidenceInterval>,
}

impl MetricsReport {
    pub fn get(&self, id: MetricId) -> f64 {
        match id {
            MetricId::Precision => self.precision,
            MetricId::Recall => self.recall,
            MetricId::Accuracy => self.accuracy,
            MetricId::F1 => self.f1,
            MetricId::F2 => self.f2,
            MetricId::BalancedAccuracy => self.balanced_accuracy,
            MetricId::Kappa => self.kappa,
        }
    }
}

/// All metrics; zero denominators give 0 and are listed in `undefined_flags`.
pub fn metrics(counts: &ConfusionCounts) -> MetricsReport {
    let mut undefined = BTreeSet::new();
    let mut v = |id| {
        metric_value(counts, id).unwrap_or_else(|| {
            undefined.insert(id);
            0.0
        })
    };
    let (precision, recall, accuracy) = (
        v(MetricId::Precision),
        v(MetricId::Recall),
        v(MetricId::Accuracy),
    );
    let (f1, f2, balanced_accuracy, kappa) = (
        v(MetricId::F1),
        v(MetricId::F2),
        v(MetricId::BalancedAccuracy),
        v(MetricId::Kappa),
    );
    MetricsReport {
        counts: *counts,
        precision,
        recall,
        accuracy,
        f1,
        f2,
        balanced_accuracy,
        kappa,
        undefined_flags: undefined,
        ci: BTreeMap::new(),
    }
}

/// Half-up rounding to `places` decimals.
///
/// A relative nudge of a few ulps keeps values such as 0.625, which are not
/// exactly representable, from rounding down.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    let scaled = x * scale;
    let nudged = scaled + scaled.abs() * 4.0 * f64::EPSILON;
    if x >= 0.0 {
        (nudged + 0.5).floor() / scale
    } else {
        -((-nudged + 0.5).floor()) / scale
    }
}

/// Two-decimal display string, half-up.
pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_example() {
        let preds: BTreeMap<String, bool> = [("a", true), ("b", true), ("c", false), ("d", false)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let gold: BTreeMap<String, bool> = [("a", true), ("b", false), ("c", false), ("d", true)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(
            confusion(&preds, &gold).unwrap(),
            ConfusionCounts::new(1, 1, 1, 1)
        );
        let mut extra = preds.clone();
        extra.insert("z".into(), true);
        assert_eq!(confusion(&extra, &gold).unwrap_err().missing, ["z"]);
        assert_eq!(confusion(&BTreeMap::new(), &gold).unwrap().n(), 0);
    }

    #[test]
    fn rounding() {
        assert_eq!(fmt2(0.625), "0.63");
        assert_eq!(fmt2(0.615384), "0.62");
        assert_eq!(fmt2(0.0), "0.00");
        assert_eq!(fmt2(0.005), "0.01");
        assert_eq!(fmt2(0.004999), "0.00");
        assert_eq!(fmt2(1.0), "1.00");
    }

    #[test]
    fn zero_denominators_flagged() {
        let m = metrics(&ConfusionCounts::new(0, 0, 5, 0));
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined_flags.contains(&MetricId::Precision));
        assert!(m.undefined_flags.contains(&MetricId::Recall));
        assert!(m.undefined_flags.contains(&MetricId::Kappa));
        assert!(!m.undefined_flags.contains(&MetricId::Accuracy));
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn metric_names_parse() {
        for m in MetricId::ALL {
            assert_eq!(m.name().parse::<MetricId>().unwrap(), m);
        }
        assert!("auc".parse::<MetricId>().is_err());
    }
}
