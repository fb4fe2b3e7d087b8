//! Gold-label references derived from a dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::DatasetRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Rows where both lay annotators agree; gold is their shared label.
    LayConsensus,
    /// Rows with an expert label; gold is that label.
    ExpertSubset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub kind: ReferenceKind,
    /// Selected ids in dataset order.
    pub rows: Vec<String>,
    pub gold: BTreeMap<String, bool>,
    pub excluded: usize,
    pub warnings: Vec<String>,
}

impl Reference {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.gold.values().filter(|g| **g).count()
    }
}

fn select(
    kind: ReferenceKind,
    rows: &[DatasetRow],
    gold_of: impl Fn(&DatasetRow) -> Option<bool>,
) -> Reference {
    let mut selected = Vec::new();
    let mut gold = BTreeMap::new();
    for r in rows {
        if let Some(g) = gold_of(r) {
            selected.push(r.id.clone());
            gold.insert(r.id.clone(), g);
        }
    }
    let mut warnings = Vec::new();
    if selected.is_empty() {
        warnings.push(format!("{kind:?} reference is empty"));
    }
    Reference {
        kind,
        excluded: rows.len() - selected.len(),
        rows: selected,
        gold,
        warnings,
    }
}

pub fn build_lay_consensus(rows: &[DatasetRow]) -> Reference {
    select(ReferenceKind::LayConsensus, rows, |r| {
        (r.lay1 == r.lay2).then_some(r.lay1)
    })
}

pub fn build_expert_subset(rows: &[DatasetRow]) -> Reference {
    select(ReferenceKind::ExpertSubset, rows, |r| r.expert)
}

pub fn build_reference(kind: ReferenceKind, rows: &[DatasetRow]) -> Reference {
    match kind {
        ReferenceKind::LayConsensus => build_lay_consensus(rows),
        ReferenceKind::ExpertSubset => build_expert_subset(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, lay1: bool, lay2: bool, expert: Option<bool>) -> DatasetRow {
        DatasetRow {
            id: id.into(),
            text: "t".into(),
            lay1,
            lay2,
            expert,
        }
    }

    #[test]
    fn consensus_keeps_agreeing_rows() {
        let rows = [
            row("a", true, true, None),
            row("b", true, false, Some(true)),
            row("c", false, false, None),
        ];
        let r = build_lay_consensus(&rows);
        assert_eq!(r.rows, ["a", "c"]);
        assert_eq!(r.gold["a"], true);
        assert_eq!(r.excluded, 1);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn all_disagree_is_empty_with_warning() {
        let r = build_lay_consensus(&[row("a", true, false, None)]);
        assert!(r.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn expert_subset_uses_expert_label() {
        let rows = [
            row("a", true, true, Some(false)),
            row("b", false, true, Some(true)),
            row("c", false, false, None),
        ];
        let r = build_expert_subset(&rows);
        assert_eq!(r.rows, ["a", "b"]);
        assert_eq!(r.gold["a"], false);
        assert_eq!(r.positives(), 1);
        assert!(build_expert_subset(&rows[2..]).warnings.len() == 1);
    }
}
