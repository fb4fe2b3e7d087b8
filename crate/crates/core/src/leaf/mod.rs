//! Leaf resolution: constrained model judgments and symbolic predicates.

mod answer;
mod case;
mod prompt;
mod symbolic;

use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatClient, DecodingConfig};
use crate::model::{Leaf, LeafBinding};

pub use answer::{normalize_answer, parse_binary_answer, AmbiguousAnswer, AnswerLexicon};
pub use case::{CaseRecord, FieldValue};
pub use prompt::{
    binary_instruction, build_leaf_prompt, evaluate_llm_leaf, render, retry_reminder,
    PromptTemplate, DEFAULT_TEMPLATE_ID,
};
pub use symbolic::{deadline_elapsed, field_equals, Period, PredicateRegistry, SymbolicPredicate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Llm,
    Symbolic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafResult {
    pub value: bool,
    pub raw_answer: String,
    pub attempts: u32,
    pub evaluator: EvaluatorKind,
    /// Cache key of the request that produced the accepted answer.
    pub request_digest: Option<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum LeafFailureKind {
    #[error("no usable yes/no answer: {raw:?}")]
    Ambiguous { raw: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("replay cache miss for key {0}")]
    CacheMiss(String),
    #[error("missing case field '{0}'")]
    MissingField(String),
    #[error("case field '{field}' is {found}, expected {expected}")]
    BadField {
        field: String,
        expected: String,
        found: String,
    },
    #[error("unknown symbolic predicate '{0}'")]
    UnknownPredicate(String),
    #[error("bad predicate parameters: {0}")]
    BadParams(String),
    #[error("no model client configured")]
    NoClient,
    #[error("case text is empty")]
    EmptyCaseText,
    #[error("leaf binding does not match the evaluator")]
    WrongBinding,
}

impl LeafFailureKind {
    pub fn raw_answer(&self) -> Option<&str> {
        match self {
            LeafFailureKind::Ambiguous { raw } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafFailure {
    pub node_id: String,
    pub evaluator: Option<EvaluatorKind>,
    pub attempts: u32,
    pub kind: LeafFailureKind,
}

impl fmt::Display for LeafFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "leaf '{}': {}", self.node_id, self.kind)
    }
}

/// Everything leaf evaluation needs besides the map and the case.
#[derive(Clone)]
pub struct Environment {
    pub client: Option<Arc<dyn ChatClient>>,
    pub registry: PredicateRegistry,
    pub decoding: DecodingConfig,
    pub template: PromptTemplate,
    pub evaluation_date: NaiveDate,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("client", &self.client.is_some())
            .field("registry", &self.registry)
            .field("decoding", &self.decoding)
            .field("template", &self.template.id)
            .field("evaluation_date", &self.evaluation_date)
            .finish()
    }
}

impl Environment {
    /// No model client; only symbolic leaves and overrides can be resolved.
    pub fn offline(evaluation_date: NaiveDate) -> Self {
        Environment {
            client: None,
            registry: PredicateRegistry::default(),
            decoding: DecodingConfig::default(),
            template: PromptTemplate::default(),
            evaluation_date,
        }
    }

    pub fn with_client(mut self, client: Arc<dyn ChatClient>) -> Self {
        self.client = Some(client);
        self
    }
}

pub fn evaluate_symbolic_leaf(
    node_id: &str,
    leaf: &Leaf,
    case: &CaseRecord,
    registry: &PredicateRegistry,
    evaluation_date: NaiveDate,
) -> Result<LeafResult, LeafFailure> {
    let fail = |kind| LeafFailure {
        node_id: node_id.to_owned(),
        evaluator: Some(EvaluatorKind::Symbolic),
        attempts: 1,
        kind,
    };
    let LeafBinding::Symbolic { predicate, params } = &leaf.binding else {
        return Err(fail(LeafFailureKind::WrongBinding));
    };
    let p = registry
        .get(predicate)
        .ok_or_else(|| fail(LeafFailureKind::UnknownPredicate(predicate.clone())))?;
    let (value, explanation) = p.evaluate(params, case, evaluation_date).map_err(fail)?;
    Ok(LeafResult {
        value,
        raw_answer: explanation,
        attempts: 1,
        evaluator: EvaluatorKind::Symbolic,
        request_digest: None,
        notes: Vec::new(),
    })
}

/// Dispatches on the leaf's binding.
pub fn resolve_leaf(
    node_id: &str,
    leaf: &Leaf,
    case: &CaseRecord,
    env: &Environment,
) -> Result<LeafResult, LeafFailure> {
    match &leaf.binding {
        LeafBinding::Llm { .. } => {
            let client = env.client.as_deref().ok_or_else(|| LeafFailure {
                node_id: node_id.to_owned(),
                evaluator: Some(EvaluatorKind::Llm),
                attempts: 0,
                kind: LeafFailureKind::NoClient,
            })?;
            evaluate_llm_leaf(node_id, leaf, case, client, &env.template, &env.decoding)
        }
        LeafBinding::Symbolic { .. } => {
            evaluate_symbolic_leaf(node_id, leaf, case, &env.registry, env.evaluation_date)
        }
    }
}
