//! Markdown report: one row per model, a P/R/Acc column group per method.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::config::Method;
use super::metrics::{fmt2, round_half_up, MetricId};
use super::runner::{RunResult, Summary};

const COLUMNS: [MetricId; 3] = [MetricId::Precision, MetricId::Recall, MetricId::Accuracy];

/// The results grid. Methods appear in their canonical order, models in
/// first-seen order. The best rounded value of each column is bold (ties
/// included).
pub fn render_table(results: &[RunResult]) -> String {
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| results.iter().any(|r| r.method == *m))
        .collect();
    let mut models: Vec<&str> = Vec::new();
    for r in results {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let cell = |method: Method, model: &str| {
        results
            .iter()
            .find(|r| r.method == method && r.model == model)
    };

    let mut best: Vec<Option<f64>> = Vec::new();
    for &m in &methods {
        for c in COLUMNS {
            best.push(
                models
                    .iter()
                    .filter_map(|model| cell(m, model))
                    .map(|r| round_half_up(r.metrics.get(c), 2))
                    .reduce(f64::max),
            );
        }
    }

    let mut out = String::new();
    out.push_str("| Model |");
    for m in &methods {
        let _ = write!(
            out,
            " {} P | {} R | {} Acc |",
            m.title(),
            m.title(),
            m.title()
        );
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in 0..methods.len() * COLUMNS.len() {
        out.push_str("---:|");
    }
    out.push('\n');
    for model in &models {
        let _ = write!(out, "| {model} |");
        for (mi, &m) in methods.iter().enumerate() {
            for (ci, c) in COLUMNS.iter().enumerate() {
                match cell(m, model) {
                    None => out.push_str(" – |"),
                    Some(r) => {
                        let v = round_half_up(r.metrics.get(*c), 2);
                        let text = fmt2(r.metrics.get(*c));
                        if best[mi * COLUMNS.len() + ci] == Some(v) {
                            let _ = write!(out, " **{text}** |");
                        } else {
                            let _ = write!(out, " {text} |");
                        }
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_report(summary: &Summary) -> String {
    let mut out = String::new();
    let r = &summary.reference;
    let kind = match r.kind {
        super::ReferenceKind::LayConsensus => "lay consensus",
        super::ReferenceKind::ExpertSubset => "expert subset",
    };
    let _ = writeln!(out, "# Benchmark results\n");
    let _ = writeln!(
        out,
        "Reference: {kind}, {} cases ({} positive, {} excluded).\n",
        r.size, r.positives, r.excluded
    );
    out.push_str(&render_table(&summary.results));
    out.push_str("\n## Details\n\n");
    out.push_str("| Method | Model | TP | FP | TN | FN | F1 | F2 | Bal. Acc | κ | Flagged |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for res in &summary.results {
        let m = &res.metrics;
        let c = &m.counts;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            res.method.title(),
            res.model,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            fmt2(m.f1),
            fmt2(m.f2),
            fmt2(m.balanced_accuracy),
            fmt2(m.kappa),
            res.flagged_cases
        );
    }
    let undefined: BTreeSet<String> = summary
        .results
        .iter()
        .flat_map(|res| {
            res.metrics
                .undefined_flags
                .iter()
                .map(move |f| format!("{}/{}: {}", res.method, res.model, f.name()))
        })
        .collect();
    if !undefined.is_empty() {
        out.push_str("\nUndefined (reported as 0):\n\n");
        for u in undefined {
            let _ = writeln!(out, "- {u}");
        }
    }
    let with_ci: Vec<&RunResult> = summary
        .results
        .iter()
        .filter(|r| !r.metrics.ci.is_empty())
        .collect();
    if !with_ci.is_empty() {
        out.push_str("\n## Bootstrap intervals\n\n");
        for res in with_ci {
            for (id, ci) in &res.metrics.ci {
                let _ = writeln!(
                    out,
                    "- {} / {} {}: [{}, {}] ({:.0}% percentile, {} resamples, seed {})",
                    res.method.title(),
                    res.model,
                    id.name(),
                    fmt2(ci.lo),
                    fmt2(ci.hi),
                    ci.level * 100.0,
                    ci.resamples,
                    ci.seed
                );
            }
        }
    }
    let _ = writeln!(out, "\nManifest hash: `{}`", summary.manifest_hash);
    out
}
