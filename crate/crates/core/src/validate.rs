//! Structural checks on a [`RuleMap`]. Problems are collected, never thrown.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{NodeKind, RuleMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueCode {
    MissingNode,
    EmptyBranch,
    KeyMismatch,
    MultipleParents,
    Cycle,
    Orphan,
    RootHasParent,
    EmptyQuestion,
    InvalidId,
    SingleChild,
    EmptyContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub node_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.node_id {
            Some(id) => write!(f, "{sev} [{:?}] {id}: {}", self.code, self.message),
            None => write!(f, "{sev} [{:?}] {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    fn push(&mut self, severity: Severity, code: IssueCode, node: Option<&str>, msg: String) {
        self.issues.push(Issue {
            severity,
            code,
            node_id: node.map(str::to_owned),
            message: msg,
        });
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn validate(map: &RuleMap) -> ValidationReport {
    use IssueCode::*;
    use Severity::*;

    let mut report = ValidationReport::default();

    if !map.nodes.contains_key(&map.root) {
        report.push(
            Error,
            MissingNode,
            Some(&map.root),
            format!("root '{}' does not exist", map.root),
        );
    }

    let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
    for (key, node) in &map.nodes {
        if key != &node.id {
            report.push(
                Error,
                KeyMismatch,
                Some(key),
                format!("stored under key '{key}' but carries id '{}'", node.id),
            );
        }
        if !is_ident(&node.id) {
            report.push(
                Error,
                InvalidId,
                Some(&node.id),
                "id must match [a-zA-Z_][a-zA-Z0-9_]*".into(),
            );
        }
        match &node.kind {
            NodeKind::Branch(b) => {
                if b.children.is_empty() {
                    report.push(
                        Error,
                        EmptyBranch,
                        Some(key),
                        "branch has no children".into(),
                    );
                } else if b.children.len() == 1 {
                    report.push(
                        Warning,
                        SingleChild,
                        Some(key),
                        format!("'{}' branch with a single child", b.operator),
                    );
                }
                for child in &b.children {
                    if !map.nodes.contains_key(child) {
                        report.push(
                            Error,
                            MissingNode,
                            Some(key),
                            format!("child '{child}' does not exist"),
                        );
                    }
                    parents
                        .entry(child.as_str())
                        .or_default()
                        .push(key.as_str());
                }
            }
            NodeKind::Leaf(l) => {
                if l.question.trim().is_empty() {
                    report.push(
                        Error,
                        EmptyQuestion,
                        Some(key),
                        "leaf question is empty".into(),
                    );
                }
                if l.binding.is_llm() && l.context.trim().is_empty() {
                    report.push(
                        Warning,
                        EmptyContext,
                        Some(key),
                        "model-evaluated leaf has no curated context".into(),
                    );
                }
            }
        }
    }

    for (child, ps) in &parents {
        if ps.len() > 1 {
            report.push(
                Error,
                MultipleParents,
                Some(child),
                format!("referenced by {} parents: {}", ps.len(), ps.join(", ")),
            );
        }
    }
    if parents.contains_key(map.root.as_str()) {
        report.push(
            Error,
            RootHasParent,
            Some(&map.root),
            "root is referenced as a child".into(),
        );
    }

    // Cycle detection: iterative DFS with colouring over every node, so
    // cycles disconnected from the root are found too.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    let mut cyclic: HashSet<&str> = HashSet::new();
    for start in map.nodes.keys() {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start.as_str(), Mark::Open);
        while let Some((id, idx)) = stack.pop() {
            let children: &[String] = match map.nodes.get(id).map(|n| &n.kind) {
                Some(NodeKind::Branch(b)) => &b.children,
                _ => &[],
            };
            if idx < children.len() {
                stack.push((id, idx + 1));
                let child = children[idx].as_str();
                if !map.nodes.contains_key(child) {
                    continue;
                }
                match marks.get(child) {
                    Some(Mark::Open) => {
                        cyclic.insert(child);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child, Mark::Open);
                        stack.push((child, 0));
                    }
                }
            } else {
                marks.insert(id, Mark::Done);
            }
        }
    }
    let mut cyclic: Vec<_> = cyclic.into_iter().collect();
    cyclic.sort_unstable();
    for id in cyclic {
        report.push(Error, Cycle, Some(id), "node is its own ancestor".into());
    }

    let reachable: HashSet<&str> = map.preorder().into_iter().collect();
    for key in map.nodes.keys() {
        if !reachable.contains(key.as_str()) && !parents.contains_key(key.as_str()) {
            report.push(
                Error,
                Orphan,
                Some(key),
                "node is not reachable from the root".into(),
            );
        }
    }

    report
}
