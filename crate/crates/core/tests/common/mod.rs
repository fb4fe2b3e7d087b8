#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rulemap_core::{Leaf, Node, NodeKind, Operator, RuleMap};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn stgb130() -> RuleMap {
    rulemap_core::dsl::parse_file(&fixtures().join("stgb130.rmap")).expect("stgb130 fixture parses")
}

/// Brute-force reference semantics, written without the crate's evaluator:
/// leaf `i` of `leaves` takes bit `i` of `bits`.
pub fn oracle(map: &RuleMap, leaves: &[&str], bits: u32) -> bool {
    fn go(map: &RuleMap, id: &str, leaves: &[&str], bits: u32) -> bool {
        match &map.nodes[id].kind {
            NodeKind::Leaf(_) => {
                let i = leaves.iter().position(|l| *l == id).expect("leaf listed");
                bits >> i & 1 == 1
            }
            NodeKind::Branch(b) => {
                let n = b.children.len();
                let k = b
                    .children
                    .iter()
                    .filter(|c| go(map, c, leaves, bits))
                    .count();
                let v = match b.operator {
                    Operator::All => k == n,
                    Operator::Any => k > 0,
                    Operator::One => k == 1,
                };
                if b.negated {
                    !v
                } else {
                    v
                }
            }
        }
    }
    go(map, &map.root, leaves, bits)
}

/// Random well-formed map with between 1 and `max_leaves` leaves.
pub fn random_map(seed: u64, max_leaves: usize) -> RuleMap {
    let mut rng = StdRng::seed_from_u64(seed);
    let target = rng.gen_range(1..=max_leaves);
    let mut map = RuleMap::new(format!("rand{seed}"), "random", "n0");
    let mut next = 0usize;
    let mut leaves = 0usize;
    build(&mut rng, &mut map, &mut next, &mut leaves, target, 0);
    map
}

fn build(
    rng: &mut StdRng,
    map: &mut RuleMap,
    next: &mut usize,
    leaves: &mut usize,
    budget: usize,
    depth: usize,
) -> String {
    let id = format!("n{next}");
    *next += 1;
    if budget == 1 || depth >= 4 && rng.gen_bool(0.5) {
        *leaves += 1;
        map.insert(Node::leaf(&id, Leaf::llm(format!("Q{id}?"))));
        return id;
    }
    // split the leaf budget over 1..=4 children
    let arity = rng.gen_range(1..=budget.min(4));
    let mut shares = vec![1usize; arity];
    for _ in 0..budget - arity {
        let i = rng.gen_range(0..arity);
        shares[i] += 1;
    }
    let op = [Operator::All, Operator::Any, Operator::One][rng.gen_range(0..3)];
    let negated = rng.gen_bool(0.3);
    let children: Vec<String> = shares
        .into_iter()
        .map(|s| build(rng, map, next, leaves, s, depth + 1))
        .collect();
    map.insert(Node::branch(&id, op, negated, children));
    id
}

/// Writes `body` to `dir/bench.toml` and loads it. Paths in `body` should be
/// absolute (see [`fx`]).
pub fn write_config(dir: &std::path::Path, body: &str) -> rulemap_core::bench::LoadedConfig {
    let path = dir.join("bench.toml");
    std::fs::write(&path, body).unwrap();
    rulemap_core::bench::BenchConfig::load(&path).unwrap()
}

/// Absolute fixture path as a TOML string literal.
pub fn fx(rel: &str) -> String {
    format!(
        "{:?}",
        fixtures()
            .join(rel)
            .canonicalize()
            .unwrap()
            .display()
            .to_string()
    )
}

/// SplitMix64, unrelated to the generator the crate uses.
pub struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

/// Percentile bootstrap with nearest-rank quantiles.
pub fn oracle_ci(
    pairs: &[(bool, bool)],
    metric: fn(u64, u64, u64, u64) -> f64,
    b: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = SplitMix(seed);
    let mut vals = Vec::with_capacity(b);
    for _ in 0..b {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for _ in 0..pairs.len() {
            match pairs[rng.below(pairs.len())] {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        vals.push(metric(tp, fp, tn, fn_));
    }
    vals.sort_by(f64::total_cmp);
    let rank = |p: f64| vals[((p * b as f64).ceil() as usize).clamp(1, b) - 1];
    (rank(0.025), rank(0.975))
}

pub fn precision(tp: u64, fp: u64, _: u64, _: u64) -> f64 {
    if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

pub fn recall(tp: u64, _: u64, _: u64, fn_: u64) -> f64 {
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

pub fn accuracy(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    (tp + tn) as f64 / (tp + fp + tn + fn_) as f64
}

/// Zero-context predictions of the synthetic responder on the 868-case
/// consensus reference, as (predicted, gold) pairs.
pub fn pairs_868() -> Vec<(bool, bool)> {
    let dir = tempfile::tempdir().unwrap();
    let loaded = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nmethods = [\"zero_context\"]\nmodels = [\"gpt-4o\"]\nevaluation_date = \"2025-01-01\"\n[bootstrap]\nresamples = 1\n",
            fx("datasets/synthetic_1000.csv")
        ),
    );
    let out = rulemap_core::bench::run_benchmark(
        &loaded,
        std::sync::Arc::new(rulemap_core::bench::synth::SyntheticResponder::default()),
        &rulemap_core::llm::ClientSettings::default(),
    )
    .unwrap();
    let rows = rulemap_core::bench::load_dataset(&loaded.resolve(&loaded.config.dataset)).unwrap();
    let gold: std::collections::HashMap<_, _> =
        rows.iter().map(|r| (r.id.clone(), r.lay1)).collect();
    out.predictions
        .iter()
        .map(|p| (p.label, gold[&p.case_id]))
        .collect()
}
