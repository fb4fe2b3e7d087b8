mod common;

use std::fs;

use common::fixtures;
use rulemap_core::canonical::{from_canonical_str, to_canonical_string};
use rulemap_core::dsl::{parse, parse_file, to_dsl};
use rulemap_core::{validate, RuleMap};

fn corpus() -> Vec<(String, RuleMap)> {
    let mut paths: Vec<_> = fs::read_dir(fixtures().join("dsl"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "rmap"))
        .collect();
    paths.sort();
    paths.push(fixtures().join("stgb130.rmap"));
    paths.push(fixtures().join("stgb130_fine.rmap"));
    paths
        .into_iter()
        .map(|p| {
            let m = parse_file(&p).unwrap_or_else(|e| panic!("{}: {e:?}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), m)
        })
        .collect()
}

#[test]
fn corpus_is_large_enough_and_valid() {
    let c = corpus();
    assert!(c.len() >= 20, "{} fixtures", c.len());
    for (name, m) in &c {
        assert!(validate(m).is_valid(), "{name}: {:?}", validate(m));
    }
}

#[test]
fn parse_of_serialize_is_identity() {
    for (name, m) in corpus() {
        let text = to_dsl(&m);
        let back = parse(&text).unwrap_or_else(|e| panic!("{name}: {e:?}\n{text}"));
        assert_eq!(back, m, "{name}");
    }
}

#[test]
fn serialize_is_idempotent() {
    for (name, m) in corpus() {
        let once = to_dsl(&m);
        let twice = to_dsl(&parse(&once).unwrap());
        assert_eq!(once, twice, "{name}");
        let c1 = to_canonical_string(&m);
        let c2 = to_canonical_string(&from_canonical_str(&c1).unwrap());
        assert_eq!(c1, c2, "{name}");
    }
}

#[test]
fn canonical_golden_files() {
    for stem in ["stgb130", "stgb130_fine"] {
        let m = parse_file(&fixtures().join(format!("{stem}.rmap"))).unwrap();
        let golden = fs::read_to_string(fixtures().join(format!("{stem}.canonical.json"))).unwrap();
        assert_eq!(to_canonical_string(&m), golden, "{stem}");
        assert_eq!(from_canonical_str(&golden).unwrap(), m, "{stem}");
    }
}

#[test]
fn canonical_and_dsl_agree() {
    for (name, m) in corpus() {
        let via_json = from_canonical_str(&to_canonical_string(&m)).unwrap();
        assert_eq!(to_dsl(&via_json), to_dsl(&m), "{name}");
    }
}
