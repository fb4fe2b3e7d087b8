//! File-backed rulemap store: one canonical document per version plus an
//! append-only revision history.
//!
//! ```text
//! <root>/rulemaps/<id>/history.json
//! <root>/rulemaps/<id>/v1.json
//! <root>/rulemaps/<id>/v2.json
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rulemap_core::canonical::{from_canonical_str, to_canonical, to_canonical_string};
use rulemap_core::validate::{validate, Issue};
use rulemap_core::{NodeKind, RuleMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub version: u64,
    pub timestamp: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WriteOutcome {
    pub id: String,
    pub version: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("rulemap '{0}' not found")]
    NotFound(String),
    #[error("rulemap '{id}' has no version {version}")]
    VersionNotFound { id: String, version: u64 },
    #[error("rulemap '{map}' has no node '{node}'")]
    NodeNotFound { map: String, node: String },
    #[error("node '{0}' is a branch, not a leaf")]
    NotALeaf(String),
    #[error("invalid rulemap id '{0}'")]
    BadId(String),
    #[error("document id '{doc}' does not match '{path}'")]
    IdMismatch { doc: String, path: String },
    #[error("rulemap is invalid")]
    Invalid(Vec<Issue>),
    #[error("stored document is corrupt: {0}")]
    Corrupt(String),
    #[error("store i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn safe_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(body)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

/// Node ids whose canonical entry differs between two maps.
fn changed_nodes(old: &RuleMap, new: &RuleMap) -> Vec<String> {
    let index = |m: &RuleMap| -> HashMap<String, serde_json::Value> {
        to_canonical(m)["nodes"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|n| (n["id"].as_str().unwrap_or_default().to_owned(), n.clone()))
            .collect()
    };
    let (a, b) = (index(old), index(new));
    let mut ids: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|id| a.get(*id) != b.get(*id))
        .cloned()
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("rulemaps"))?;
        Ok(Store {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !safe_id(id) {
            return Err(StoreError::BadId(id.to_owned()));
        }
        Ok(self.root.join("rulemaps").join(id))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_owned()).or_default().clone()
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for e in fs::read_dir(self.root.join("rulemaps"))? {
            let e = e?;
            if e.path().join("history.json").is_file() {
                ids.push(e.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn history(&self, id: &str) -> Result<Vec<Revision>, StoreError> {
        let path = self.dir(id)?.join("history.json");
        match fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| StoreError::Corrupt(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::NotFound(id.to_owned()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// The document at `version`, or the current one.
    pub fn get(&self, id: &str, version: Option<u64>) -> Result<RuleMap, StoreError> {
        let history = self.history(id)?;
        let current = history
            .last()
            .map(|r| r.version)
            .ok_or_else(|| StoreError::NotFound(id.to_owned()))?;
        let v = version.unwrap_or(current);
        if !history.iter().any(|r| r.version == v) {
            return Err(StoreError::VersionNotFound {
                id: id.to_owned(),
                version: v,
            });
        }
        let text = fs::read_to_string(self.dir(id)?.join(format!("v{v}.json")))?;
        from_canonical_str(&text).map_err(|e| StoreError::Corrupt(e.to_string()))
    }

    fn commit(
        &self,
        id: &str,
        mut map: RuleMap,
        summary: String,
        mut warnings: Vec<String>,
    ) -> Result<WriteOutcome, StoreError> {
        let report = validate(&map);
        if !report.is_valid() {
            return Err(StoreError::Invalid(report.errors().cloned().collect()));
        }
        warnings.extend(report.warnings().map(|w| w.to_string()));
        let dir = self.dir(id)?;
        fs::create_dir_all(&dir)?;
        let mut history = match self.history(id) {
            Ok(h) => h,
            Err(StoreError::NotFound(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        let version = history.last().map_or(1, |r| r.version + 1);
        map.version = version;
        let doc = dir.join(format!("v{version}.json"));
        if doc.exists() {
            return Err(StoreError::Corrupt(format!(
                "{} already exists",
                doc.display()
            )));
        }
        write_atomic(&doc, to_canonical_string(&map).as_bytes())?;
        history.push(Revision {
            version,
            timestamp: now(),
            summary,
        });
        let mut h = serde_json::to_string_pretty(&history).expect("history serializes");
        h.push('\n');
        write_atomic(&dir.join("history.json"), h.as_bytes())?;
        Ok(WriteOutcome {
            id: id.to_owned(),
            version,
            warnings,
        })
    }

    /// Stores `map` as the next version of `id`.
    pub fn put(&self, id: &str, map: RuleMap) -> Result<WriteOutcome, StoreError> {
        if map.id != id {
            return Err(StoreError::IdMismatch {
                doc: map.id,
                path: id.to_owned(),
            });
        }
        self.dir(id)?;
        let lock = self.lock(id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let summary = match self.get(id, None) {
            Ok(prev) => {
                let changed = changed_nodes(&prev, &map);
                if changed.is_empty() {
                    "document replaced (no node changes)".to_owned()
                } else {
                    format!("document replaced; changed nodes: {}", changed.join(", "))
                }
            }
            Err(StoreError::NotFound(_)) => "created".to_owned(),
            Err(e) => return Err(e),
        };
        self.commit(id, map, summary, Vec::new())
    }

    /// Replaces one leaf's context and stores the result as a new version.
    pub fn update_leaf_context(
        &self,
        id: &str,
        node: &str,
        context: String,
    ) -> Result<WriteOutcome, StoreError> {
        let lock = self.lock(id);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut map = self.get(id, None)?;
        let n = map
            .nodes
            .get_mut(node)
            .ok_or_else(|| StoreError::NodeNotFound {
                map: id.to_owned(),
                node: node.to_owned(),
            })?;
        let NodeKind::Leaf(leaf) = &mut n.kind else {
            return Err(StoreError::NotALeaf(node.to_owned()));
        };
        let mut warnings = Vec::new();
        if context.trim().is_empty() {
            warnings.push(format!("leaf '{node}' now has an empty context"));
        }
        leaf.context = context;
        self.commit(
            id,
            map,
            format!("context of leaf '{node}' updated"),
            warnings,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rulemap_core::{Leaf, Node, Operator};

    fn map() -> RuleMap {
        RuleMap::new("m", "M", "r")
            .with_node(Node::branch("r", Operator::All, false, ["a", "b"]))
            .with_node(Node::leaf("a", Leaf::llm("A?")))
            .with_node(Node::leaf("b", Leaf::llm("B?")))
    }

    #[test]
    fn versions_increase_and_history_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.put("m", map()).unwrap().version, 1);
        assert_eq!(
            s.update_leaf_context("m", "a", "ctx".into())
                .unwrap()
                .version,
            2
        );
        let h = s.history("m").unwrap();
        assert_eq!(h.iter().map(|r| r.version).collect::<Vec<_>>(), [1, 2]);
        assert!(h[1].summary.contains("'a'"));
        assert_eq!(
            s.get("m", Some(1))
                .unwrap()
                .node("a")
                .unwrap()
                .as_leaf()
                .unwrap()
                .context,
            ""
        );
        assert_eq!(s.get("m", None).unwrap().version, 2);
        assert_eq!(s.list().unwrap(), ["m"]);
    }

    #[test]
    fn rejects_bad_ids_and_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        assert!(matches!(s.history("../x"), Err(StoreError::BadId(_))));
        assert!(matches!(
            s.put("other", map()),
            Err(StoreError::IdMismatch { .. })
        ));
        assert!(matches!(
            s.update_leaf_context("m", "a", String::new()),
            Err(StoreError::NotFound(_))
        ));
        s.put("m", map()).unwrap();
        assert!(matches!(
            s.update_leaf_context("m", "r", String::new()),
            Err(StoreError::NotALeaf(_))
        ));
        assert!(matches!(
            s.update_leaf_context("m", "zz", String::new()),
            Err(StoreError::NodeNotFound { .. })
        ));
    }
}
