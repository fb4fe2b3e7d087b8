use proptest::prelude::*;
use rulemap_cli::service::store::Store;
use rulemap_core::{Leaf, Node, Operator, RuleMap};

fn map(question: &str) -> RuleMap {
    RuleMap::new("m", "M", "r")
        .with_node(Node::branch("r", Operator::Any, false, ["a", "b"]))
        .with_node(Node::leaf("a", Leaf::llm(question)))
        .with_node(Node::leaf("b", Leaf::llm("B?")))
}

#[derive(Debug, Clone)]
enum Op {
    Put(String),
    Context(&'static str, String),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        "[A-Z][a-z]{0,5}\\?".prop_map(Op::Put),
        (
            prop::sample::select(vec!["a", "b", "r", "zz"]),
            "[a-z ]{0,8}"
        )
            .prop_map(|(n, c)| Op::Context(n, c)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn versions_strictly_increase(ops in prop::collection::vec(op(), 1..12)) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut expected = 0u64;
        for op in ops {
            let res = match op {
                Op::Put(q) => store.put("m", map(&q)),
                Op::Context(node, c) => store.update_leaf_context("m", node, c),
            };
            if let Ok(w) = res {
                expected += 1;
                prop_assert_eq!(w.version, expected);
            }
        }
        if expected > 0 {
            let h = store.history("m").unwrap();
            prop_assert!(h.windows(2).all(|w| w[0].version < w[1].version));
            prop_assert_eq!(h.last().unwrap().version, expected);
            prop_assert_eq!(store.get("m", None).unwrap().version, expected);
        }
    }
}
