//! Bottom-up evaluation of a [`RuleMap`] into an [`EvaluationTrace`].
//!
//! Leaves are resolved first (from a fixed assignment, what-if overrides, or
//! the leaf evaluators), then truth values propagate upward through each
//! branch's operator. The trace records every node so a reviewer can recheck
//! each branch from its children without the map.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leaf::{self, CaseRecord, Environment, EvaluatorKind, LeafFailure, LeafFailureKind};
use crate::model::{Leaf, NodeId, NodeKind, Operator, RuleMap};
use crate::validate::{validate, Issue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Evaluate every node.
    #[default]
    Full,
    /// Stop asking for children once a branch's value is decided.
    ShortCircuit,
}

/// What happens when a leaf cannot be resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    /// Abort the case.
    #[default]
    Strict,
    /// Treat the leaf as false and flag the trace entry. Cache misses still abort.
    Lenient,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("operator applied to an empty child list")]
    EmptyChildren,
    #[error("rulemap is invalid: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMap(Vec<Issue>),
    #[error("no truth value for leaves: {}", .0.join(", "))]
    IncompleteAssignment(Vec<NodeId>),
    #[error("'{0}' is not a leaf of this rulemap")]
    UnknownLeaf(NodeId),
    #[error("leaf '{}' failed: {}", .0.node_id, .0.kind)]
    LeafFailure(LeafFailure),
}

/// Applies a (possibly negated) connective to child truth values.
///
/// `One` is exactly-one-true for any arity.
pub fn apply_operator(op: Operator, negated: bool, children: &[bool]) -> Result<bool, EvalError> {
    if children.is_empty() {
        return Err(EvalError::EmptyChildren);
    }
    let value = match op {
        Operator::All => children.iter().all(|&v| v),
        Operator::Any => children.iter().any(|&v| v),
        Operator::One => children.iter().filter(|&&v| v).count() == 1,
    };
    Ok(value != negated)
}

/// Leaf id → truth value, used for what-if analysis and truth tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruthAssignment(pub BTreeMap<NodeId, bool>);

impl TruthAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, leaf: impl Into<String>, value: bool) -> &mut Self {
        self.0.insert(leaf.into(), value);
        self
    }

    pub fn get(&self, leaf: &str) -> Option<bool> {
        self.0.get(leaf).copied()
    }
}

impl<K: Into<String>> FromIterator<(K, bool)> for TruthAssignment {
    fn from_iter<I: IntoIterator<Item = (K, bool)>>(iter: I) -> Self {
        TruthAssignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    True,
    False,
    Skipped,
}

impl Truth {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Truth::True => Some(true),
            Truth::False => Some(false),
            Truth::Skipped => None,
        }
    }
}

impl From<bool> for Truth {
    fn from(v: bool) -> Self {
        if v {
            Truth::True
        } else {
            Truth::False
        }
    }
}

/// Where a leaf's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafSource {
    Llm,
    Symbolic,
    Assignment,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafEvidence {
    pub source: LeafSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_answer: Option<String>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_digest: Option<String>,
    /// Set when the failure policy substituted a default value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LeafEvidence {
    fn fixed(source: LeafSource) -> Self {
        LeafEvidence {
            source,
            raw_answer: None,
            attempts: 0,
            request_digest: None,
            failure: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node_id: NodeId,
    pub value: Truth,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<Operator>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf: Option<LeafEvidence>,
}

impl TraceEntry {
    pub fn is_branch(&self) -> bool {
        self.operator.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationTrace {
    pub rulemap_id: String,
    pub rulemap_version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    pub mode: EvalMode,
    pub root_value: bool,
    /// Node ids in the order their values were fixed (children before parents).
    pub order: Vec<NodeId>,
    /// One entry per node, depth-first pre-order.
    pub entries: Vec<TraceEntry>,
    /// Leaves whose value was substituted by the failure policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<NodeId>,
}

impl EvaluationTrace {
    pub fn entry(&self, id: &str) -> Option<&TraceEntry> {
        self.entries.iter().find(|e| e.node_id == id)
    }

    pub fn value(&self, id: &str) -> Option<Truth> {
        self.entry(id).map(|e| e.value)
    }

    /// Rechecks every evaluated branch against its evaluated children using
    /// only the data stored in the trace.
    pub fn check_consistency(&self) -> Result<(), String> {
        let by_id: HashMap<&str, &TraceEntry> = self
            .entries
            .iter()
            .map(|e| (e.node_id.as_str(), e))
            .collect();
        for entry in &self.entries {
            let Some(op) = entry.operator else { continue };
            let Some(stored) = entry.value.as_bool() else {
                if entry
                    .children
                    .iter()
                    .any(|c| by_id.get(c.as_str()).map(|e| e.value) != Some(Truth::Skipped))
                {
                    return Err(format!(
                        "skipped branch '{}' has evaluated children",
                        entry.node_id
                    ));
                }
                continue;
            };
            let mut values = Vec::with_capacity(entry.children.len());
            for c in &entry.children {
                let child = by_id
                    .get(c.as_str())
                    .ok_or_else(|| format!("'{}' lists unknown child '{c}'", entry.node_id))?;
                if let Some(v) = child.value.as_bool() {
                    values.push(v);
                }
            }
            let recomputed = apply_operator(op, entry.negated, &values)
                .map_err(|_| format!("branch '{}' has no evaluated children", entry.node_id))?;
            if recomputed != stored {
                return Err(format!(
                    "branch '{}' stores {stored} but its children give {recomputed}",
                    entry.node_id
                ));
            }
        }
        if self.mode == EvalMode::Full && self.entries.iter().any(|e| e.value == Truth::Skipped) {
            return Err("full-mode trace contains skipped nodes".into());
        }
        if let Some(root) = self.entries.first() {
            if root.value.as_bool() != Some(self.root_value) {
                return Err("root_value disagrees with the root entry".into());
            }
        }
        Ok(())
    }

    /// Serialized form; byte-identical for identical inputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Options for one evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub policy: FailurePolicy,
    /// Leaf values that bypass their evaluator entirely.
    pub overrides: TruthAssignment,
}

struct Walker<'a, F> {
    map: &'a RuleMap,
    mode: EvalMode,
    resolve: F,
    entries: HashMap<&'a str, TraceEntry>,
    order: Vec<NodeId>,
    flagged: Vec<NodeId>,
}

impl<'a, F> Walker<'a, F>
where
    F: FnMut(&'a str, &'a Leaf) -> Result<(bool, LeafEvidence), EvalError>,
{
    fn new(map: &'a RuleMap, mode: EvalMode, resolve: F) -> Self {
        Walker {
            map,
            mode,
            resolve,
            entries: HashMap::with_capacity(map.nodes.len()),
            order: Vec::new(),
            flagged: Vec::new(),
        }
    }

    fn eval(&mut self, id: &'a str) -> Result<bool, EvalError> {
        let node = &self.map.nodes[id];
        match &node.kind {
            NodeKind::Leaf(leaf) => {
                let (value, evidence) = (self.resolve)(id, leaf)?;
                if evidence.failure.is_some() {
                    self.flagged.push(id.to_owned());
                }
                self.entries.insert(
                    id,
                    TraceEntry {
                        node_id: id.to_owned(),
                        value: value.into(),
                        operator: None,
                        negated: false,
                        children: Vec::new(),
                        leaf: Some(evidence),
                    },
                );
                self.order.push(id.to_owned());
                Ok(value)
            }
            NodeKind::Branch(branch) => {
                let mut values = Vec::with_capacity(branch.children.len());
                let mut trues = 0usize;
                let mut decided_at = None;
                for (i, child) in branch.children.iter().enumerate() {
                    let v = self.eval(child)?;
                    values.push(v);
                    trues += v as usize;
                    if self.mode == EvalMode::ShortCircuit {
                        let decided = match branch.operator {
                            Operator::All => !v,
                            Operator::Any => v,
                            Operator::One => trues >= 2,
                        };
                        if decided {
                            decided_at = Some(i);
                            break;
                        }
                    }
                }
                if let Some(i) = decided_at {
                    for child in &branch.children[i + 1..] {
                        self.skip(child);
                    }
                }
                let value = apply_operator(branch.operator, branch.negated, &values)?;
                self.entries.insert(
                    id,
                    TraceEntry {
                        node_id: id.to_owned(),
                        value: value.into(),
                        operator: Some(branch.operator),
                        negated: branch.negated,
                        children: branch.children.clone(),
                        leaf: None,
                    },
                );
                self.order.push(id.to_owned());
                Ok(value)
            }
        }
    }

    fn skip(&mut self, id: &'a str) {
        let node = &self.map.nodes[id];
        let (operator, negated, children) = match &node.kind {
            NodeKind::Branch(b) => {
                for c in &b.children {
                    self.skip(c);
                }
                (Some(b.operator), b.negated, b.children.clone())
            }
            NodeKind::Leaf(_) => (None, false, Vec::new()),
        };
        self.entries.insert(
            id,
            TraceEntry {
                node_id: id.to_owned(),
                value: Truth::Skipped,
                operator,
                negated,
                children,
                leaf: None,
            },
        );
    }

    fn finish(mut self, case_id: Option<String>, root_value: bool) -> EvaluationTrace {
        let entries = self
            .map
            .preorder()
            .into_iter()
            .filter_map(|id| self.entries.remove(id))
            .collect();
        EvaluationTrace {
            rulemap_id: self.map.id.clone(),
            rulemap_version: self.map.version,
            case_id,
            mode: self.mode,
            root_value,
            order: self.order,
            entries,
            flagged: self.flagged,
        }
    }
}

fn ensure_valid(map: &RuleMap) -> Result<(), EvalError> {
    let report = validate(map);
    if report.is_valid() {
        Ok(())
    } else {
        Err(EvalError::InvalidMap(report.errors().cloned().collect()))
    }
}

fn check_leaf_keys(map: &RuleMap, assignment: &TruthAssignment) -> Result<(), EvalError> {
    for key in assignment.0.keys() {
        if !map.node(key).is_some_and(|n| n.is_leaf()) {
            return Err(EvalError::UnknownLeaf(key.clone()));
        }
    }
    Ok(())
}

/// Evaluates the map under a fixed leaf assignment.
///
/// In [`EvalMode::Full`] every leaf must be assigned; in short-circuit mode
/// only the leaves actually reached.
pub fn evaluate_with_assignment(
    map: &RuleMap,
    assignment: &TruthAssignment,
    mode: EvalMode,
) -> Result<EvaluationTrace, EvalError> {
    ensure_valid(map)?;
    check_leaf_keys(map, assignment)?;
    if mode == EvalMode::Full {
        let missing: Vec<NodeId> = map
            .leaf_ids()
            .into_iter()
            .filter(|id| assignment.get(id).is_none())
            .map(str::to_owned)
            .collect();
        if !missing.is_empty() {
            return Err(EvalError::IncompleteAssignment(missing));
        }
    }
    let mut walker = Walker::new(map, mode, |id: &str, _leaf: &Leaf| {
        assignment
            .get(id)
            .map(|v| (v, LeafEvidence::fixed(LeafSource::Assignment)))
            .ok_or_else(|| EvalError::IncompleteAssignment(vec![id.to_owned()]))
    });
    let root = walker.eval(&map.root)?;
    Ok(walker.finish(None, root))
}

fn evidence_from(result: leaf::LeafResult) -> (bool, LeafEvidence) {
    let source = match result.evaluator {
        EvaluatorKind::Llm => LeafSource::Llm,
        EvaluatorKind::Symbolic => LeafSource::Symbolic,
    };
    (
        result.value,
        LeafEvidence {
            source,
            raw_answer: Some(result.raw_answer),
            attempts: result.attempts,
            request_digest: result.request_digest,
            failure: None,
            notes: result.notes,
        },
    )
}

fn apply_policy(
    policy: FailurePolicy,
    outcome: Result<leaf::LeafResult, LeafFailure>,
) -> Result<(bool, LeafEvidence), EvalError> {
    match outcome {
        Ok(r) => Ok(evidence_from(r)),
        Err(f)
            if policy == FailurePolicy::Lenient
                && !matches!(f.kind, LeafFailureKind::CacheMiss(_)) =>
        {
            let mut ev = LeafEvidence::fixed(f.evaluator.map_or(LeafSource::Llm, |k| match k {
                EvaluatorKind::Llm => LeafSource::Llm,
                EvaluatorKind::Symbolic => LeafSource::Symbolic,
            }));
            ev.raw_answer = f.kind.raw_answer().map(str::to_owned);
            ev.attempts = f.attempts;
            ev.failure = Some(format!("defaulted to false: {}", f.kind));
            Ok((false, ev))
        }
        Err(f) => Err(EvalError::LeafFailure(f)),
    }
}

/// Evaluates the map against one case, resolving leaves through `env`.
pub fn evaluate(
    map: &RuleMap,
    case: &CaseRecord,
    env: &Environment,
    opts: &EvalOptions,
) -> Result<EvaluationTrace, EvalError> {
    ensure_valid(map)?;
    check_leaf_keys(map, &opts.overrides)?;

    let resolve_one = |id: &str, leaf: &Leaf| -> Result<(bool, LeafEvidence), EvalError> {
        if let Some(v) = opts.overrides.get(id) {
            return Ok((v, LeafEvidence::fixed(LeafSource::Override)));
        }
        apply_policy(opts.policy, leaf::resolve_leaf(id, leaf, case, env))
    };

    let trace = match opts.mode {
        EvalMode::ShortCircuit => {
            let mut walker = Walker::new(map, opts.mode, resolve_one);
            let root = walker.eval(&map.root)?;
            walker.finish(Some(case.id.clone()), root)
        }
        EvalMode::Full => {
            // Leaves are independent in full mode, so they may be resolved
            // concurrently; the walk below fixes the trace order.
            let leaves: Vec<(&str, &Leaf)> = map
                .leaf_ids()
                .into_iter()
                .filter_map(|id| map.nodes[id].as_leaf().map(|l| (id, l)))
                .collect();
            let resolved: HashMap<&str, Result<(bool, LeafEvidence), EvalError>> = leaves
                .par_iter()
                .map(|&(id, leaf)| (id, resolve_one(id, leaf)))
                .collect();
            let mut resolved = resolved;
            let mut walker = Walker::new(map, opts.mode, move |id: &str, _leaf: &Leaf| {
                resolved
                    .remove(id)
                    .expect("every leaf was resolved up front")
            });
            let root = walker.eval(&map.root)?;
            walker.finish(Some(case.id.clone()), root)
        }
    };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Leaf, Node};

    #[test]
    fn operator_examples() {
        use Operator::*;
        assert!(!apply_operator(All, false, &[true, false, true]).unwrap());
        assert!(apply_operator(Any, true, &[false, false]).unwrap());
        assert!(!apply_operator(One, false, &[true, true]).unwrap());
        assert!(apply_operator(All, false, &[true, true, true]).unwrap());
        assert!(apply_operator(One, false, &[false, true, false]).unwrap());
        // exactly-one, not parity
        assert!(!apply_operator(One, false, &[true, true, true]).unwrap());
        assert!(matches!(
            apply_operator(All, false, &[]),
            Err(EvalError::EmptyChildren)
        ));
    }

    fn tiny() -> RuleMap {
        RuleMap::new("m", "t", "r")
            .with_node(Node::branch("r", Operator::Any, false, ["a", "s"]))
            .with_node(Node::leaf("a", Leaf::llm("a?")))
            .with_node(Node::branch("s", Operator::All, true, ["b", "c"]))
            .with_node(Node::leaf("b", Leaf::llm("b?")))
            .with_node(Node::leaf("c", Leaf::llm("c?")))
    }

    #[test]
    fn full_requires_every_leaf() {
        let a: TruthAssignment = [("a", true), ("b", true)].into_iter().collect();
        match evaluate_with_assignment(&tiny(), &a, EvalMode::Full) {
            Err(EvalError::IncompleteAssignment(missing)) => assert_eq!(missing, ["c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_circuit_only_needs_reached_leaves() {
        let a: TruthAssignment = [("a", true)].into_iter().collect();
        let t = evaluate_with_assignment(&tiny(), &a, EvalMode::ShortCircuit).unwrap();
        assert!(t.root_value);
        assert_eq!(t.value("s"), Some(Truth::Skipped));
        assert_eq!(t.value("b"), Some(Truth::Skipped));
        assert_eq!(t.order, ["a", "r"]);
        t.check_consistency().unwrap();
    }

    #[test]
    fn unknown_assignment_key_rejected() {
        let a: TruthAssignment = [("a", true), ("r", true)].into_iter().collect();
        assert!(matches!(
            evaluate_with_assignment(&tiny(), &a, EvalMode::ShortCircuit),
            Err(EvalError::UnknownLeaf(id)) if id == "r"
        ));
    }

    #[test]
    fn trace_entries_are_preorder_and_order_is_postorder() {
        let a: TruthAssignment = [("a", false), ("b", true), ("c", false)]
            .into_iter()
            .collect();
        let t = evaluate_with_assignment(&tiny(), &a, EvalMode::Full).unwrap();
        let ids: Vec<_> = t.entries.iter().map(|e| e.node_id.as_str()).collect();
        assert_eq!(ids, ["r", "a", "s", "b", "c"]);
        assert_eq!(t.order, ["a", "b", "c", "s", "r"]);
        // s = not(b and c) = true
        assert!(t.root_value);
        t.check_consistency().unwrap();
    }

    #[test]
    fn tampered_trace_fails_consistency() {
        let a: TruthAssignment = [("a", false), ("b", true), ("c", false)]
            .into_iter()
            .collect();
        let mut t = evaluate_with_assignment(&tiny(), &a, EvalMode::Full).unwrap();
        t.entries[2].value = Truth::False;
        assert!(t.check_consistency().is_err());
    }

    #[test]
    fn invalid_map_is_rejected() {
        let mut m = tiny();
        m.insert(Node::branch("s", Operator::All, false, ["b", "missing"]));
        let a = TruthAssignment::new();
        assert!(matches!(
            evaluate_with_assignment(&m, &a, EvalMode::Full),
            Err(EvalError::InvalidMap(_))
        ));
    }
}
