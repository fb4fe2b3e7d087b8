//! Method × model benchmark orchestration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bootstrap::bootstrap_cis;
use super::config::{BenchConfig, LoadedConfig, Method};
use super::dataset::{load_dataset, DatasetRow};
use super::metrics::{metrics, ConfusionCounts, MetricsReport};
use super::reference::{build_reference, Reference, ReferenceKind};
use super::BenchError;
use crate::baselines::{self, BaselineError, BaselineMethod, StatutePack, ZERO_CONTEXT_SYSTEM};
use crate::dsl;
use crate::eval::{evaluate, EvalError, EvalOptions, EvaluationTrace, FailurePolicy};
use crate::leaf::{Environment, LeafFailureKind, PredicateRegistry, PromptTemplate};
use crate::llm::{ChatClient, ClientError, ClientSettings, DecodingConfig, LlmClient, Mode};
use crate::model::RuleMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub label: bool,
    pub method: Method,
    pub model: String,
    /// Key of the matching line in `traces.jsonl`.
    pub trace_ref: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(rename = "ref")]
    pub trace_ref: String,
    pub method: Method,
    pub model: String,
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<EvaluationTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub model: String,
    pub cases: usize,
    pub metrics: MetricsReport,
    /// Cases whose label involved a failure-policy substitution.
    pub flagged_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub kind: ReferenceKind,
    pub size: usize,
    pub positives: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reference: ReferenceSummary,
    pub results: Vec<RunResult>,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub model: String,
    /// Names of the entries in `Manifest::inputs` this run read.
    pub inputs: Vec<String>,
    pub cases: usize,
    /// Failure-policy substitutions by kind.
    pub policy_invocations: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config_path: String,
    pub config_sha256: String,
    pub mode: Mode,
    pub failure_policy: FailurePolicy,
    pub parallelism: usize,
    pub inputs: BTreeMap<String, InputFile>,
    pub runs: Vec<RunManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

impl Manifest {
    /// Hash of everything that can influence results: timestamps and the
    /// worker count are left out.
    pub fn content_hash(&self) -> String {
        let mut m = self.clone();
        m.parallelism = 0;
        m.started_at = None;
        m.finished_at = None;
        sha256_hex(
            serde_json::to_string(&m)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub predictions: Vec<PredictionRecord>,
    pub traces: Vec<TraceRecord>,
    pub summary: Summary,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn input_file(loaded: &LoadedConfig, rel: &Path) -> Result<(PathBuf, InputFile), BenchError> {
    let path = loaded.resolve(rel);
    let bytes = std::fs::read(&path)
        .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok((
        path,
        InputFile {
            path: rel.display().to_string(),
            sha256: sha256_hex(&bytes),
        },
    ))
}

/// Client settings from the environment, overridden by the config.
pub fn client_settings(loaded: &LoadedConfig) -> Result<ClientSettings, BenchError> {
    let cfg = &loaded.config;
    let mut s = ClientSettings::from_env().map_err(|e| BenchError::Config(e.to_string()))?;
    if let Some(mode) = cfg.mode {
        s.mode = mode;
    }
    if let Some(dir) = &cfg.cache_dir {
        s.cache_dir = Some(loaded.resolve(dir));
    }
    s.parallelism = cfg.parallelism;
    s.capabilities = cfg.capabilities.clone();
    Ok(s)
}

struct CaseOutcome {
    prediction: PredictionRecord,
    trace: TraceRecord,
    policy: Vec<String>,
}

struct Inputs {
    rows: Vec<DatasetRow>,
    reference: Reference,
    rulemap: Option<RuleMap>,
    pack: Option<StatutePack>,
    template: PromptTemplate,
    files: BTreeMap<String, InputFile>,
}

fn load_inputs(loaded: &LoadedConfig) -> Result<Inputs, BenchError> {
    let cfg = &loaded.config;
    let mut files = BTreeMap::new();

    let (path, f) = input_file(loaded, &cfg.dataset)?;
    files.insert("dataset".to_owned(), f);
    let rows = load_dataset(&path)?;
    let reference = build_reference(cfg.reference, &rows);
    for w in &reference.warnings {
        tracing::warn!("{w}");
    }

    let rulemap = match (&cfg.rulemap, cfg.methods.contains(&Method::Rulemapping)) {
        (Some(rel), true) => {
            let (path, f) = input_file(loaded, rel)?;
            files.insert("rulemap".to_owned(), f);
            let src = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let map = dsl::parse_file(&path).map_err(|errs| {
                BenchError::Config(format!(
                    "rulemap {}:\n{}",
                    path.display(),
                    dsl::render_errors(&src, &errs)
                ))
            })?;
            Some(map)
        }
        _ => None,
    };

    let pack = match (
        &cfg.statute_pack,
        cfg.methods.contains(&Method::LongContext),
    ) {
        (Some(rel), true) => {
            let (path, f) = input_file(loaded, rel)?;
            files.insert("statute_pack".to_owned(), f);
            Some(StatutePack::load(&path).map_err(|e| BenchError::Config(e.to_string()))?)
        }
        _ => None,
    };

    let template_dir = cfg.template_dir.as_ref().map(|d| loaded.resolve(d));
    let template = PromptTemplate::load(template_dir.as_deref(), &cfg.template)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    if cfg.methods.contains(&Method::Rulemapping) {
        files.insert(
            "leaf_template".to_owned(),
            InputFile {
                path: template.id.clone(),
                sha256: sha256_hex(format!("{}\u{0}{}", template.system, template.user).as_bytes()),
            },
        );
    }
    if cfg.methods.contains(&Method::ZeroContext) {
        files.insert(
            "zero_context_prompt".to_owned(),
            InputFile {
                path: "builtin".to_owned(),
                sha256: sha256_hex(ZERO_CONTEXT_SYSTEM.as_bytes()),
            },
        );
    }
    Ok(Inputs {
        rows,
        reference,
        rulemap,
        pack,
        template,
        files,
    })
}

fn method_inputs(method: Method) -> Vec<String> {
    let names: &[&str] = match method {
        Method::Rulemapping => &["dataset", "rulemap", "leaf_template", "cache"],
        Method::LongContext => &["dataset", "statute_pack", "cache"],
        Method::ZeroContext => &["dataset", "zero_context_prompt", "cache"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn trace_ref(method: Method, model: &str, case_id: &str) -> String {
    format!("{method}/{model}/{case_id}")
}

fn run_rulemapping_case(
    map: &RuleMap,
    row: &DatasetRow,
    env: &Environment,
    opts: &EvalOptions,
    model: &str,
) -> Result<CaseOutcome, BenchError> {
    let case = row.case();
    let fail = |message: String| BenchError::CaseFailed {
        method: Method::Rulemapping,
        model: model.to_owned(),
        case_id: row.id.clone(),
        message,
    };
    let trace = match evaluate(map, &case, env, opts) {
        Ok(t) => t,
        Err(EvalError::LeafFailure(f)) => {
            return Err(match f.kind {
                LeafFailureKind::CacheMiss(key) => BenchError::CacheMiss {
                    method: Method::Rulemapping,
                    model: model.to_owned(),
                    case_id: row.id.clone(),
                    key,
                },
                _ => fail(f.to_string()),
            })
        }
        Err(e) => return Err(fail(e.to_string())),
    };
    let flags: Vec<String> = trace
        .flagged
        .iter()
        .map(|id| format!("leaf_failure:{id}"))
        .collect();
    let policy = if flags.is_empty() {
        vec![]
    } else {
        vec!["leaf_failure".to_owned()]
    };
    let r = trace_ref(Method::Rulemapping, model, &row.id);
    Ok(CaseOutcome {
        prediction: PredictionRecord {
            case_id: row.id.clone(),
            label: trace.root_value,
            method: Method::Rulemapping,
            model: model.to_owned(),
            trace_ref: r.clone(),
            flags,
        },
        trace: TraceRecord {
            trace_ref: r,
            method: Method::Rulemapping,
            model: model.to_owned(),
            case_id: row.id.clone(),
            trace: Some(trace),
            raw_output: None,
            request_digest: None,
        },
        policy,
    })
}

fn run_baseline_case(
    method: Method,
    row: &DatasetRow,
    client: &dyn ChatClient,
    pack: Option<&StatutePack>,
    decoding: &DecodingConfig,
    policy: FailurePolicy,
) -> Result<CaseOutcome, BenchError> {
    let bm = match method {
        Method::LongContext => BaselineMethod::LongContext,
        Method::ZeroContext => BaselineMethod::ZeroContext,
        Method::Rulemapping => unreachable!("not a baseline"),
    };
    let model = decoding.model.as_str();
    let r = trace_ref(method, model, &row.id);
    let outcome = |label: bool, raw: Option<String>, digest: Option<String>, flags: Vec<String>| {
        CaseOutcome {
            prediction: PredictionRecord {
                case_id: row.id.clone(),
                label,
                method,
                model: model.to_owned(),
                trace_ref: r.clone(),
                flags: flags.clone(),
            },
            trace: TraceRecord {
                trace_ref: r.clone(),
                method,
                model: model.to_owned(),
                case_id: row.id.clone(),
                trace: None,
                raw_output: raw,
                request_digest: digest,
            },
            policy: flags,
        }
    };
    let fail = |message: String| BenchError::CaseFailed {
        method,
        model: model.to_owned(),
        case_id: row.id.clone(),
        message,
    };
    match baselines::predict(bm, &row.case(), client, pack, decoding) {
        Ok(p) => Ok(outcome(
            p.label,
            Some(p.raw_output),
            Some(p.request_digest),
            vec![],
        )),
        Err((BaselineError::Client(ClientError::CacheMiss(key)), _)) => {
            Err(BenchError::CacheMiss {
                method,
                model: model.to_owned(),
                case_id: row.id.clone(),
                key: key.0,
            })
        }
        Err((BaselineError::Config(m), _)) => Err(BenchError::Config(m)),
        Err((e, _)) if policy == FailurePolicy::Strict => Err(fail(e.to_string())),
        Err((e, unlabeled)) => {
            let flag = match e {
                BaselineError::Ambiguous(_) => "ambiguous",
                BaselineError::EmptyCaseText => "empty_case_text",
                _ => "transport",
            };
            let (raw, digest) = match unlabeled {
                Some(u) => (Some(u.raw_output), Some(u.request_digest)),
                None => (None, None),
            };
            Ok(outcome(false, raw, digest, vec![flag.to_owned()]))
        }
    }
}

fn cache_fingerprint(settings: &ClientSettings) -> Option<InputFile> {
    let dir = settings.cache_dir.as_ref()?;
    let bytes = std::fs::read(dir.join("index.json")).ok()?;
    Some(InputFile {
        path: "index.json".to_owned(),
        sha256: sha256_hex(&bytes),
    })
}

/// Runs every configured method × model over the reference rows.
///
/// `client` must already be configured; no case starts before inputs and the
/// client are known to be usable.
pub fn run_benchmark(
    loaded: &LoadedConfig,
    client: Arc<dyn ChatClient>,
    settings: &ClientSettings,
) -> Result<BenchOutput, BenchError> {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let cfg: &BenchConfig = &loaded.config;
    let inputs = load_inputs(loaded)?;
    let by_id: BTreeMap<&str, &DatasetRow> =
        inputs.rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut case_rows: Vec<&DatasetRow> = inputs
        .reference
        .rows
        .iter()
        .map(|id| by_id[id.as_str()])
        .collect();
    case_rows.sort_by(|a, b| a.id.cmp(&b.id));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;

    let mut predictions = Vec::new();
    let mut traces = Vec::new();
    let mut results = Vec::new();
    let mut runs = Vec::new();

    let mut methods = cfg.methods.clone();
    methods.sort();
    for &method in &methods {
        for model in &cfg.models {
            let decoding = DecodingConfig {
                model: model.clone(),
                temperature: cfg.decoding.temperature,
                top_p: cfg.decoding.top_p,
                seed: cfg.decoding.seed,
            };
            decoding.check().map_err(BenchError::Config)?;
            let outcomes: Vec<CaseOutcome> = match method {
                Method::Rulemapping => {
                    let map = inputs.rulemap.as_ref().expect("loaded with the method");
                    let env = Environment {
                        client: Some(client.clone()),
                        registry: PredicateRegistry::default(),
                        decoding: decoding.clone(),
                        template: inputs.template.clone(),
                        evaluation_date: cfg.evaluation_date,
                    };
                    let opts = EvalOptions {
                        mode: cfg.eval_mode,
                        policy: cfg.failure_policy,
                        overrides: Default::default(),
                    };
                    pool.install(|| {
                        case_rows
                            .par_iter()
                            .map(|row| run_rulemapping_case(map, row, &env, &opts, model))
                            .collect::<Result<_, _>>()
                    })?
                }
                Method::LongContext | Method::ZeroContext => pool.install(|| {
                    case_rows
                        .par_iter()
                        .map(|row| {
                            run_baseline_case(
                                method,
                                row,
                                client.as_ref(),
                                inputs.pack.as_ref(),
                                &decoding,
                                cfg.failure_policy,
                            )
                        })
                        .collect::<Result<_, _>>()
                })?,
            };

            let mut counts = ConfusionCounts::default();
            let mut pairs = Vec::with_capacity(outcomes.len());
            let mut policy_invocations: BTreeMap<String, u64> = BTreeMap::new();
            let mut flagged_cases = 0;
            for o in &outcomes {
                let gold = inputs.reference.gold[&o.prediction.case_id];
                counts.add(o.prediction.label, gold);
                pairs.push((o.prediction.label, gold));
                if !o.policy.is_empty() {
                    flagged_cases += 1;
                }
                for p in &o.policy {
                    *policy_invocations.entry(p.clone()).or_default() += 1;
                }
            }
            let mut report = metrics(&counts);
            if !pairs.is_empty() && cfg.bootstrap.resamples > 0 && !cfg.bootstrap.metrics.is_empty()
            {
                let cis = bootstrap_cis(
                    &pairs,
                    &cfg.bootstrap.metrics,
                    cfg.bootstrap.resamples,
                    cfg.bootstrap.seed,
                    cfg.bootstrap.level,
                );
                report.ci = cfg.bootstrap.metrics.iter().copied().zip(cis).collect();
            }
            results.push(RunResult {
                method,
                model: model.clone(),
                cases: outcomes.len(),
                metrics: report,
                flagged_cases,
            });
            runs.push(RunManifest {
                method,
                model: model.clone(),
                inputs: method_inputs(method),
                cases: outcomes.len(),
                policy_invocations,
            });
            for o in outcomes {
                predictions.push(o.prediction);
                traces.push(o.trace);
            }
        }
    }

    predictions
        .sort_by(|a, b| (a.method, &a.model, &a.case_id).cmp(&(b.method, &b.model, &b.case_id)));
    traces.sort_by(|a, b| (a.method, &a.model, &a.case_id).cmp(&(b.method, &b.model, &b.case_id)));

    let mut files = inputs.files;
    if let Some(f) = cache_fingerprint(settings) {
        files.insert("cache".to_owned(), f);
    }
    let manifest = Manifest {
        tool: concat!("rulemap ", env!("CARGO_PKG_VERSION")).to_owned(),
        config_path: loaded.path.display().to_string(),
        config_sha256: sha256_hex(&loaded.raw),
        mode: settings.mode,
        failure_policy: cfg.failure_policy,
        parallelism: cfg.parallelism,
        inputs: files,
        runs,
        started_at: Some(started_at),
        finished_at: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    let summary = Summary {
        reference: ReferenceSummary {
            kind: inputs.reference.kind,
            size: inputs.reference.len(),
            positives: inputs.reference.positives(),
            excluded: inputs.reference.excluded,
        },
        results,
        manifest_hash: manifest.content_hash(),
    };
    Ok(BenchOutput {
        predictions,
        traces,
        summary,
        manifest,
    })
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for i in items {
        s.push_str(&serde_json::to_string(i).expect("record serializes"));
        s.push('\n');
    }
    s
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("document serializes");
    s.push('\n');
    s
}

impl BenchOutput {
    pub fn predictions_jsonl(&self) -> String {
        jsonl(&self.predictions)
    }

    pub fn summary_json(&self) -> String {
        pretty(&self.summary)
    }

    /// Writes predictions.jsonl, traces.jsonl, summary.json, manifest.json
    /// and report.md into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let files = [
            ("predictions.jsonl", self.predictions_jsonl()),
            ("traces.jsonl", jsonl(&self.traces)),
            ("summary.json", self.summary_json()),
            ("manifest.json", pretty(&self.manifest)),
            ("report.md", super::report::render_report(&self.summary)),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Loads the config, builds the model client (failing fast on missing
/// credentials), runs, and writes outputs. `output_dir` overrides the config.
pub fn run_from_config(
    path: &Path,
    output_dir: Option<&Path>,
) -> Result<(BenchOutput, PathBuf), BenchError> {
    let loaded = BenchConfig::load(path)?;
    let settings = client_settings(&loaded)?;
    let client = LlmClient::new(settings.clone()).map_err(|e| BenchError::Config(e.to_string()))?;
    let out_dir = match (output_dir, &loaded.config.output_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => loaded.resolve(d),
        (None, None) => PathBuf::from("bench-out"),
    };
    let output = run_benchmark(&loaded, Arc::new(client), &settings)?;
    output.write(&out_dir)?;
    Ok((output, out_dir))
}
