//! Canonical JSON document for a rulemap, as stored and served.
//!
//! ```json
//! {
//!   "id": "stgb130", "version": 2, "title": "...", "root": "r",
//!   "nodes": [
//!     {"id": "r", "kind": "branch", "label": "...", "operator": "all",
//!      "negated": false, "children": ["a"]},
//!     {"id": "a", "kind": "leaf", "question": "...", "context": "",
//!      "answer_language": "de", "evaluator": {"kind": "llm", "retry_limit": 2}}
//!   ],
//!   "metadata": {}
//! }
//! ```
//!
//! Nodes are listed in pre-order from the root; unreachable nodes follow in
//! insertion order. Decoding reports the JSON pointer of the first offending
//! value.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde_json::{json, Map, Value};

use crate::model::{Branch, Language, Leaf, LeafBinding, Node, NodeKind, Operator, RuleMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    /// JSON pointer, e.g. `/nodes/3/operator`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() {
            "/"
        } else {
            &self.path
        };
        write!(f, "{path}: {}", self.message)
    }
}

impl std::error::Error for SchemaError {}

fn node_json(node: &Node) -> Value {
    match &node.kind {
        NodeKind::Branch(b) => {
            let mut m = Map::new();
            m.insert("id".into(), json!(node.id));
            m.insert("kind".into(), json!("branch"));
            if let Some(label) = &b.label {
                m.insert("label".into(), json!(label));
            }
            m.insert("operator".into(), json!(b.operator.keyword()));
            m.insert("negated".into(), json!(b.negated));
            m.insert("children".into(), json!(b.children));
            Value::Object(m)
        }
        NodeKind::Leaf(l) => json!({
            "id": node.id,
            "kind": "leaf",
            "question": l.question,
            "context": l.context,
            "answer_language": l.answer_language.code(),
            "evaluator": serde_json::to_value(&l.binding).expect("binding serializes"),
        }),
    }
}

pub fn to_canonical(map: &RuleMap) -> Value {
    let mut order: Vec<&str> = map.preorder();
    let seen: HashSet<&str> = order.iter().copied().collect();
    order.extend(
        map.nodes
            .keys()
            .map(String::as_str)
            .filter(|id| !seen.contains(id)),
    );
    let nodes: Vec<Value> = order.iter().map(|id| node_json(&map.nodes[*id])).collect();
    json!({
        "id": map.id,
        "version": map.version,
        "title": map.title,
        "root": map.root,
        "nodes": nodes,
        "metadata": map.metadata,
    })
}

/// Pretty-printed canonical JSON with a trailing newline.
pub fn to_canonical_string(map: &RuleMap) -> String {
    let mut s = serde_json::to_string_pretty(&to_canonical(map)).expect("canonical json");
    s.push('\n');
    s
}

struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

fn err(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<Obj<'a>, SchemaError> {
    v.as_object()
        .map(|map| Obj {
            path: path.to_owned(),
            map,
        })
        .ok_or_else(|| err(path, "expected an object"))
}

impl<'a> Obj<'a> {
    fn at(&self, key: &str) -> String {
        format!(
            "{}/{}",
            self.path,
            key.replace('~', "~0").replace('/', "~1")
        )
    }

    fn get(&self, key: &str) -> Result<&'a Value, SchemaError> {
        self.map
            .get(key)
            .ok_or_else(|| err(&self.at(key), "missing required field"))
    }

    fn str(&self, key: &str) -> Result<&'a str, SchemaError> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| err(&self.at(key), "expected a string"))
    }

    fn opt_str(&self, key: &str) -> Result<Option<&'a str>, SchemaError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| err(&self.at(key), "expected a string")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, SchemaError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_bool()
                .ok_or_else(|| err(&self.at(key), "expected a boolean")),
        }
    }

    fn u64(&self, key: &str) -> Result<u64, SchemaError> {
        self.get(key)?
            .as_u64()
            .ok_or_else(|| err(&self.at(key), "expected a non-negative integer"))
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>, SchemaError> {
        self.get(key)?
            .as_array()
            .ok_or_else(|| err(&self.at(key), "expected an array"))
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), SchemaError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(err(&self.at(k), "unknown field")),
            None => Ok(()),
        }
    }
}

fn decode_binding(v: &Value, path: &str) -> Result<LeafBinding, SchemaError> {
    let o = object(v, path)?;
    match o.str("kind")? {
        "llm" => {
            o.reject_unknown(&["kind", "retry_limit"])?;
            let retry_limit = match o.map.get("retry_limit") {
                None => crate::model::DEFAULT_RETRY_LIMIT,
                Some(_) => u32::try_from(o.u64("retry_limit")?)
                    .map_err(|_| err(&o.at("retry_limit"), "out of range"))?,
            };
            Ok(LeafBinding::Llm { retry_limit })
        }
        "symbolic" => {
            o.reject_unknown(&["kind", "predicate", "params"])?;
            let predicate = o.str("predicate")?.to_owned();
            let params = match o.map.get("params") {
                None => Vec::new(),
                Some(_) => o
                    .array("params")?
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        p.as_str().map(str::to_owned).ok_or_else(|| {
                            err(&format!("{}/{i}", o.at("params")), "expected a string")
                        })
                    })
                    .collect::<Result<_, _>>()?,
            };
            Ok(LeafBinding::Symbolic { predicate, params })
        }
        other => Err(err(
            &o.at("kind"),
            format!("unknown evaluator kind '{other}', expected 'llm' or 'symbolic'"),
        )),
    }
}

fn decode_node(v: &Value, path: &str) -> Result<Node, SchemaError> {
    let o = object(v, path)?;
    let id = o.str("id")?.to_owned();
    let kind = match o.str("kind")? {
        "branch" => {
            o.reject_unknown(&["id", "kind", "label", "operator", "negated", "children"])?;
            let op = o.str("operator")?;
            let operator = Operator::from_keyword(op).ok_or_else(|| {
                err(
                    &o.at("operator"),
                    format!("unknown operator '{op}', expected all, any or one"),
                )
            })?;
            let children = o
                .array("children")?
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    c.as_str().map(str::to_owned).ok_or_else(|| {
                        err(&format!("{}/{i}", o.at("children")), "expected a node id")
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            NodeKind::Branch(Branch {
                label: o.opt_str("label")?.map(str::to_owned),
                operator,
                negated: o.bool_or("negated", false)?,
                children,
            })
        }
        "leaf" => {
            o.reject_unknown(&[
                "id",
                "kind",
                "question",
                "context",
                "answer_language",
                "evaluator",
            ])?;
            let answer_language = match o.opt_str("answer_language")? {
                None => Language::default(),
                Some(code) => Language::from_code(code).ok_or_else(|| {
                    err(
                        &o.at("answer_language"),
                        format!("unsupported language '{code}'"),
                    )
                })?,
            };
            let binding = match o.map.get("evaluator") {
                None => LeafBinding::default(),
                Some(b) => decode_binding(b, &o.at("evaluator"))?,
            };
            NodeKind::Leaf(Leaf {
                question: o.str("question")?.to_owned(),
                binding,
                context: o.opt_str("context")?.unwrap_or_default().to_owned(),
                answer_language,
            })
        }
        other => {
            return Err(err(
                &o.at("kind"),
                format!("unknown node kind '{other}', expected 'branch' or 'leaf'"),
            ))
        }
    };
    Ok(Node { id, kind })
}

/// Decodes a canonical document. Structural validity (dangling children,
/// cycles, ...) is left to [`crate::validate::validate`].
pub fn from_canonical(v: &Value) -> Result<RuleMap, SchemaError> {
    let o = object(v, "")?;
    o.reject_unknown(&["id", "version", "title", "root", "nodes", "metadata"])?;
    let mut map = RuleMap::new(o.str("id")?, o.str("title")?, o.str("root")?);
    map.version = o.u64("version")?;
    for (i, n) in o.array("nodes")?.iter().enumerate() {
        let path = format!("/nodes/{i}");
        let node = decode_node(n, &path)?;
        if map.nodes.contains_key(&node.id) {
            return Err(err(
                &format!("{path}/id"),
                format!("duplicate node id '{}'", node.id),
            ));
        }
        map.insert(node);
    }
    if let Some(meta) = o.map.get("metadata") {
        let m = object(meta, "/metadata")?;
        let mut out = BTreeMap::new();
        for (k, v) in m.map {
            let s = v
                .as_str()
                .ok_or_else(|| err(&m.at(k), "expected a string"))?;
            out.insert(k.clone(), s.to_owned());
        }
        map.metadata = out;
    }
    Ok(map)
}

pub fn from_canonical_str(s: &str) -> Result<RuleMap, SchemaError> {
    let v: Value = serde_json::from_str(s).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    from_canonical(&v)
}
