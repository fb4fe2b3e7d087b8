//! Rulemap data model: a rooted tree of operator branches and question leaves.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Identifier of a node, unique within one [`RuleMap`].
pub type NodeId = String;

/// Branch connective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    /// Conjunction: every child holds.
    All,
    /// Disjunction: at least one child holds.
    Any,
    /// Exclusive choice: exactly one child holds.
    One,
}

impl Operator {
    pub fn keyword(self) -> &'static str {
        match self {
            Operator::All => "all",
            Operator::Any => "any",
            Operator::One => "one",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Operator::All),
            "any" => Some(Operator::Any),
            "one" => Some(Operator::One),
            _ => None,
        }
    }

    pub fn glyph(self) -> char {
        match self {
            Operator::All => '∧',
            Operator::Any => '∨',
            Operator::One => '⊻',
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Language a leaf expects its binary answer in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    De,
    En,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::De => "de",
            Language::En => "en",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "de" => Some(Language::De),
            "en" => Some(Language::En),
            _ => None,
        }
    }
}

/// Default number of re-asks after an ambiguous model answer.
pub const DEFAULT_RETRY_LIMIT: u32 = 2;

/// How a leaf obtains its truth value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LeafBinding {
    /// Constrained model call with the leaf's curated context.
    Llm { retry_limit: u32 },
    /// Deterministic predicate over structured case fields.
    Symbolic {
        predicate: String,
        #[serde(default)]
        params: Vec<String>,
    },
}

impl Default for LeafBinding {
    fn default() -> Self {
        LeafBinding::Llm {
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }
}

impl LeafBinding {
    pub fn is_llm(&self) -> bool {
        matches!(self, LeafBinding::Llm { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub label: Option<String>,
    pub operator: Operator,
    pub negated: bool,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leaf {
    pub question: String,
    pub binding: LeafBinding,
    pub context: String,
    pub answer_language: Language,
}

impl Leaf {
    pub fn llm(question: impl Into<String>) -> Self {
        Leaf {
            question: question.into(),
            binding: LeafBinding::default(),
            context: String::new(),
            answer_language: Language::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Branch(Branch),
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl Node {
    pub fn branch(
        id: impl Into<String>,
        operator: Operator,
        negated: bool,
        children: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Branch(Branch {
                label: None,
                operator,
                negated,
                children: children.into_iter().map(Into::into).collect(),
            }),
        }
    }

    pub fn leaf(id: impl Into<String>, leaf: Leaf) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Leaf(leaf),
        }
    }

    /// Display name: branch label, leaf question, or the id as fallback.
    pub fn label(&self) -> &str {
        match &self.kind {
            NodeKind::Branch(b) => b.label.as_deref().unwrap_or(&self.id),
            NodeKind::Leaf(l) => &l.question,
        }
    }

    pub fn as_leaf(&self) -> Option<&Leaf> {
        match &self.kind {
            NodeKind::Leaf(l) => Some(l),
            NodeKind::Branch(_) => None,
        }
    }

    pub fn as_branch(&self) -> Option<&Branch> {
        match &self.kind {
            NodeKind::Branch(b) => Some(b),
            NodeKind::Leaf(_) => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }
}

/// A versioned logic tree encoding one legal norm.
///
/// Equality is structural: node insertion order does not matter, child order
/// does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMap {
    pub id: String,
    pub version: u64,
    pub title: String,
    pub root: NodeId,
    pub nodes: IndexMap<NodeId, Node>,
    pub metadata: BTreeMap<String, String>,
}

impl RuleMap {
    pub fn new(id: impl Into<String>, title: impl Into<String>, root: impl Into<String>) -> Self {
        RuleMap {
            id: id.into(),
            version: 1,
            title: title.into(),
            root: root.into(),
            nodes: IndexMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Inserts a node, returning the previous node with the same id, if any.
    pub fn insert(&mut self, node: Node) -> Option<Node> {
        self.nodes.insert(node.id.clone(), node)
    }

    pub fn with_node(mut self, node: Node) -> Self {
        self.insert(node);
        self
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn root_node(&self) -> Option<&Node> {
        self.nodes.get(&self.root)
    }

    /// Node ids in depth-first pre-order from the root, following child order.
    ///
    /// Missing children are skipped and each node is visited at most once, so
    /// this is total even on maps that fail validation.
    pub fn preorder(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.root.as_str()];
        while let Some(id) = stack.pop() {
            let Some(node) = self.nodes.get(id) else {
                continue;
            };
            if !seen.insert(id) {
                continue;
            }
            out.push(node.id.as_str());
            if let NodeKind::Branch(b) = &node.kind {
                for child in b.children.iter().rev() {
                    stack.push(child.as_str());
                }
            }
        }
        out
    }

    /// Leaf ids in depth-first document order.
    pub fn leaf_ids(&self) -> Vec<&str> {
        self.preorder()
            .into_iter()
            .filter(|id| self.nodes[*id].is_leaf())
            .collect()
    }

    pub fn branch_count(&self) -> usize {
        self.nodes.values().filter(|n| !n.is_leaf()).count()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.values().filter(|n| n.is_leaf()).count()
    }
}
