mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{fixtures, fx, write_config};
use rulemap_core::bench::synth::SyntheticResponder;
use rulemap_core::bench::{run_benchmark, BenchError};
use rulemap_core::llm::{ChatClient, ClientSettings, LlmClient, Mode};

fn mini_config(
    dir: &std::path::Path,
    parallelism: usize,
    extra: &str,
) -> rulemap_core::bench::LoadedConfig {
    write_config(
        dir,
        &format!(
            "dataset = {}\nmodels = [\"gpt-4o\", \"gpt-5-mini\"]\nrulemap = {}\nstatute_pack = {}\n\
             parallelism = {parallelism}\nevaluation_date = \"2025-01-01\"\n{extra}\n[bootstrap]\nresamples = 200\n",
            fx("datasets/mini_30.csv"),
            fx("stgb130_fine.rmap"),
            fx("statute_pack.json"),
        ),
    )
}

#[test]
fn output_does_not_depend_on_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let mut loaded = mini_config(dir.path(), 1, "");
    let client: Arc<dyn ChatClient> = Arc::new(SyntheticResponder::default());
    let settings = ClientSettings::default();
    let one = run_benchmark(&loaded, Arc::clone(&client), &settings).unwrap();
    loaded.config.parallelism = 8;
    let eight = run_benchmark(&loaded, client, &settings).unwrap();
    assert_eq!(one.predictions.len(), 3 * 2 * 30);
    assert_eq!(one.predictions_jsonl(), eight.predictions_jsonl());
    assert_eq!(one.summary_json(), eight.summary_json());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    one.write(a.path()).unwrap();
    eight.write(b.path()).unwrap();
    for f in [
        "predictions.jsonl",
        "traces.jsonl",
        "summary.json",
        "report.md",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bundled_replay_cache_runs_offline() {
    let loaded =
        rulemap_core::bench::BenchConfig::load(&fixtures().join("bench/mini.toml")).unwrap();
    let settings = ClientSettings {
        parallelism: loaded.config.parallelism,
        ..ClientSettings::replay(loaded.resolve(loaded.config.cache_dir.as_ref().unwrap()))
    };
    let client = LlmClient::new(settings.clone()).unwrap();
    assert_eq!(client.mode(), Mode::Replay);
    assert!(!client.has_network());
    let client: Arc<dyn ChatClient> = Arc::new(client);
    let t = Instant::now();
    let a = run_benchmark(&loaded, Arc::clone(&client), &settings).unwrap();
    let b = run_benchmark(&loaded, client, &settings).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0, "{:?}", t.elapsed());
    assert_eq!(a.predictions.len(), 90);
    assert_eq!(a.predictions_jsonl(), b.predictions_jsonl());
    assert_eq!(a.summary_json(), b.summary_json());
    assert!(
        a.predictions.iter().all(|p| p.flags.is_empty()),
        "no leaf failures expected"
    );
}

#[test]
fn replay_miss_aborts_even_when_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = mini_config(dir.path(), 2, "failure_policy = \"lenient\"");
    let cache = tempfile::tempdir().unwrap();
    let settings = ClientSettings::replay(cache.path());
    let client = Arc::new(LlmClient::new(settings.clone()).unwrap());
    match run_benchmark(&loaded, client, &settings) {
        Err(BenchError::CacheMiss { key, .. }) => assert_eq!(key.len(), 64),
        other => panic!(
            "expected a cache miss, got {:?}",
            other.map(|o| o.predictions.len())
        ),
    }
}

#[test]
fn live_mode_without_credentials_is_a_config_error() {
    let settings = ClientSettings {
        mode: Mode::Live,
        parallelism: 1,
        ..Default::default()
    };
    let err = LlmClient::new(settings).err().expect("must fail");
    assert!(err.to_string().contains("LLM_API_BASE"), "{err}");
    let settings = ClientSettings {
        mode: Mode::Live,
        api_base: Some("http://127.0.0.1:9".into()),
        parallelism: 1,
        ..Default::default()
    };
    assert!(LlmClient::new(settings)
        .err()
        .unwrap()
        .to_string()
        .contains("LLM_API_KEY"));
}

#[test]
fn missing_config_names_the_path() {
    let err =
        rulemap_core::bench::BenchConfig::load(std::path::Path::new("/nonexistent/bench.toml"))
            .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/bench.toml"), "{err}");
}
