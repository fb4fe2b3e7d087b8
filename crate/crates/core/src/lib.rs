//! Rulemaps: legal norms as operator trees whose leaves are answered one at a
//! time by a language model or a symbolic predicate.

pub mod baselines;
pub mod bench;
pub mod canonical;
pub mod dsl;
pub mod eval;
pub mod leaf;
pub mod llm;
pub mod model;
pub mod validate;

pub use canonical::{from_canonical, to_canonical, SchemaError};
pub use eval::{
    apply_operator, evaluate, evaluate_with_assignment, EvalError, EvalMode, EvalOptions,
    EvaluationTrace, FailurePolicy, TraceEntry, Truth, TruthAssignment,
};
pub use model::{Branch, Language, Leaf, LeafBinding, Node, NodeId, NodeKind, Operator, RuleMap};
pub use validate::{validate, Issue, IssueCode, Severity, ValidationReport};
