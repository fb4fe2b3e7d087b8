//! `rulemap` command-line tool and HTTP service.

pub mod service;

use std::fmt::Write as _;
use std::path::Path;

use rulemap_core::canonical::from_canonical_str;
use rulemap_core::dsl;
use rulemap_core::{EvaluationTrace, RuleMap, Truth};

/// Loads a rulemap from DSL text, or from canonical JSON when the file
/// ends in `.json`.
pub fn load_map(path: &Path) -> Result<RuleMap, String> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        return from_canonical_str(&src).map_err(|e| format!("{}: {e}", path.display()));
    }
    dsl::parse_file(path)
        .map_err(|errs| format!("{}:\n{}", path.display(), dsl::render_errors(&src, &errs)))
}

fn glyph(t: Truth) -> &'static str {
    match t {
        Truth::True => "⊤",
        Truth::False => "⊥",
        Truth::Skipped => "·",
    }
}

/// Indented, human-readable rendering of a trace.
///
/// ```text
/// root = ⊥  all: ⊤ ∧ ⊥ ∧ ⊤
///   attacking_action = ⊤  any: ⊥ ∨ ⊤
///     incitement = ⊥  [override]
/// ```
pub fn render_trace(map: &RuleMap, trace: &EvaluationTrace) -> String {
    let mut out = String::new();
    let depth = |id: &str| -> usize {
        let mut d = 0;
        let mut cur = id.to_owned();
        while let Some(parent) = map.nodes.values().find(|n| {
            n.as_branch()
                .is_some_and(|b| b.children.iter().any(|c| *c == cur))
        }) {
            d += 1;
            cur = parent.id.clone();
        }
        d
    };
    for e in &trace.entries {
        let _ = write!(
            out,
            "{}{} = {}",
            "  ".repeat(depth(&e.node_id)),
            e.node_id,
            glyph(e.value)
        );
        if let Some(op) = e.operator {
            let parts: Vec<&str> = e
                .children
                .iter()
                .map(|c| trace.value(c).map_or("?", glyph))
                .collect();
            let joined = parts.join(&format!(" {} ", op.glyph()));
            if e.negated {
                let _ = write!(out, "  not {op}: ¬({joined})");
            } else {
                let _ = write!(out, "  {op}: {joined}");
            }
        }
        if let Some(l) = &e.leaf {
            let src = serde_json::to_value(l.source).ok();
            let _ = write!(
                out,
                "  [{}",
                src.as_ref().and_then(|v| v.as_str()).unwrap_or("?")
            );
            if let Some(raw) = &l.raw_answer {
                let _ = write!(out, ": {:?}", raw.trim());
            }
            if let Some(f) = &l.failure {
                let _ = write!(out, "; FAILED: {f}");
            }
            out.push(']');
        }
        out.push('\n');
    }
    out
}
