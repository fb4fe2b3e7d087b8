use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use rulemap_cli::service::store::Store;
use rulemap_cli::service::{router, AppState};
use rulemap_cli::{load_map, render_trace};
use rulemap_core::bench::synth::{self, SynthSpec};
use rulemap_core::bench::{render_report, run_from_config, write_dataset, Summary};
use rulemap_core::canonical::to_canonical_string;
use rulemap_core::leaf::{CaseRecord, Environment};
use rulemap_core::llm::{ChatClient, ClientSettings, LlmClient};
use rulemap_core::{
    dsl, evaluate, validate, EvalMode, EvalOptions, FailurePolicy, LeafBinding, Severity,
    TruthAssignment,
};

#[derive(Parser)]
#[command(
    name = "rulemap",
    version,
    about = "Rule-tree evaluation, benchmarking and a small HTTP service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    #[value(alias = "short-circuit")]
    Short,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Lenient,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    Dsl,
}

#[derive(Subcommand)]
enum Command {
    /// Check a rulemap (DSL or canonical JSON) for structural problems.
    Validate {
        map: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one case against a rulemap and print the trace.
    Eval {
        map: PathBuf,
        #[arg(long, conflicts_with = "case_file", required_unless_present_any = ["case_file", "what_if"])]
        case_text: Option<String>,
        #[arg(long)]
        case_file: Option<PathBuf>,
        #[arg(long, default_value = "adhoc")]
        case_id: String,
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
        /// Fix a leaf's value, e.g. `--what-if suitability=false`. Repeatable.
        #[arg(long = "what-if", value_name = "LEAF=BOOL", value_parser = parse_what_if)]
        what_if: Vec<(String, bool)>,
        #[arg(long, value_enum, default_value = "strict")]
        policy: PolicyArg,
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        /// Evaluation date for date predicates (YYYY-MM-DD).
        #[arg(long)]
        date: Option<NaiveDate>,
        /// Print the trace as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a benchmark described by a TOML config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the markdown report for a summary.json.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Default evaluation date for requests that name none.
        #[arg(long)]
        date: Option<NaiveDate>,
        /// Rulemap files to store at startup if their id is not stored yet.
        #[arg(long)]
        import: Vec<PathBuf>,
    },
    /// Generate the synthetic benchmark dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
        /// Also write a consensus-only subset here.
        #[arg(long)]
        mini: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        mini_size: usize,
    },
    /// Convert a rulemap between DSL and canonical JSON.
    Export {
        map: PathBuf,
        #[arg(long, value_enum, default_value = "canonical")]
        format: Format,
    },
}

fn parse_what_if(s: &str) -> Result<(String, bool), String> {
    let (leaf, v) = s.split_once('=').ok_or("expected LEAF=BOOL")?;
    let v = match v.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "yes" | "ja" => true,
        "false" | "f" | "0" | "no" | "nein" => false,
        other => return Err(format!("'{other}' is not a boolean")),
    };
    Ok((leaf.trim().to_owned(), v))
}

fn today() -> NaiveDate {
    chrono::Utc::now().date_naive()
}

fn cmd_validate(map: &Path, json: bool) -> Result<(), String> {
    let m = load_map(map)?;
    let report = validate(&m);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        for i in &report.issues {
            println!("{i}");
        }
        println!(
            "{}: {} nodes ({} leaves), {} errors, {} warnings",
            map.display(),
            m.nodes.len(),
            m.leaf_count(),
            report.errors().count(),
            report.warnings().count()
        );
    }
    if report.issues.iter().any(|i| i.severity == Severity::Error) {
        return Err("rulemap is invalid".into());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    map: &Path,
    text: Option<String>,
    file: Option<PathBuf>,
    case_id: String,
    mode: ModeArg,
    what_if: Vec<(String, bool)>,
    policy: PolicyArg,
    model: String,
    date: Option<NaiveDate>,
    json: bool,
) -> Result<(), String> {
    let m = load_map(map)?;
    let text = match (text, file) {
        (Some(t), _) => t,
        (None, Some(f)) => {
            std::fs::read_to_string(&f).map_err(|e| format!("cannot read {}: {e}", f.display()))?
        }
        (None, None) => String::new(),
    };
    let overrides: BTreeMap<String, bool> = what_if.into_iter().collect();
    let mut env = Environment::offline(date.unwrap_or_else(today));
    env.decoding.model = model;
    let needs_client = m.nodes.values().any(|n| {
        n.as_leaf().is_some_and(|l| {
            matches!(l.binding, LeafBinding::Llm { .. }) && !overrides.contains_key(&n.id)
        })
    });
    if needs_client {
        let settings = ClientSettings::from_env().map_err(|e| e.to_string())?;
        let client = LlmClient::new(settings).map_err(|e| e.to_string())?;
        env.client = Some(Arc::new(client) as Arc<dyn ChatClient>);
    }
    let opts = EvalOptions {
        mode: match mode {
            ModeArg::Full => EvalMode::Full,
            ModeArg::Short => EvalMode::ShortCircuit,
        },
        policy: match policy {
            PolicyArg::Strict => FailurePolicy::Strict,
            PolicyArg::Lenient => FailurePolicy::Lenient,
        },
        overrides: TruthAssignment(overrides),
    };
    let trace =
        evaluate(&m, &CaseRecord::new(case_id, text), &env, &opts).map_err(|e| e.to_string())?;
    if json {
        println!("{}", trace.to_json());
    } else {
        print!("{}", render_trace(&m, &trace));
        println!("root={}", trace.root_value);
    }
    Ok(())
}

fn cmd_bench(config: &Path, out: Option<&Path>) -> Result<(), String> {
    let (output, dir) = run_from_config(config, out).map_err(|e| e.to_string())?;
    print!(
        "{}",
        rulemap_core::bench::report::render_table(&output.summary.results)
    );
    eprintln!(
        "{} predictions written to {}",
        output.predictions.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_report(results: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(results)
        .map_err(|e| format!("cannot read {}: {e}", results.display()))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", results.display()))?;
    if summary.results.is_empty() {
        return Err(format!("{}: no results", results.display()));
    }
    print!("{}", render_report(&summary));
    Ok(())
}

fn cmd_serve(
    port: u16,
    store: PathBuf,
    host: String,
    date: Option<NaiveDate>,
    import: Vec<PathBuf>,
) -> Result<(), String> {
    let store = Store::open(&store).map_err(|e| e.to_string())?;
    for path in &import {
        let m = load_map(path)?;
        if store.history(&m.id).is_err() {
            let id = m.id.clone();
            let out = store
                .put(&id, m)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            tracing::info!("imported {} as {} v{}", path.display(), out.id, out.version);
        }
    }
    let settings = ClientSettings::from_env().map_err(|e| e.to_string())?;
    let parallelism = settings.parallelism;
    let client: Option<Arc<dyn ChatClient>> = match LlmClient::new(settings) {
        Ok(c) => Some(Arc::new(c)),
        Err(e) => {
            tracing::warn!(
                "no model client ({e}); only overridden or symbolic leaves can be evaluated"
            );
            None
        }
    };
    let state = Arc::new(AppState::new(
        store,
        client,
        date.unwrap_or_else(today),
        parallelism,
    ));
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| format!("cannot bind {addr}: {e}"))?;
        tracing::info!("listening on http://{addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}

fn cmd_synth(out: &Path, seed: u64, mini: Option<&Path>, mini_size: usize) -> Result<(), String> {
    let rows = synth::generate(&SynthSpec::default(), seed);
    let write = |path: &Path, rows: &[rulemap_core::bench::DatasetRow]| -> Result<(), String> {
        let f = std::fs::File::create(path)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        write_dataset(rows, f).map_err(|e| format!("{}: {e}", path.display()))
    };
    write(out, &rows)?;
    if let Some(p) = mini {
        write(p, &synth::mini(&rows, mini_size))?;
    }
    Ok(())
}

fn cmd_export(map: &Path, format: Format) -> Result<(), String> {
    let m = load_map(map)?;
    match format {
        Format::Canonical => print!("{}", to_canonical_string(&m)),
        Format::Dsl => print!("{}", dsl::to_dsl(&m)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Validate { map, json } => cmd_validate(&map, json),
        Command::Eval {
            map,
            case_text,
            case_file,
            case_id,
            mode,
            what_if,
            policy,
            model,
            date,
            json,
        } => cmd_eval(
            &map, case_text, case_file, case_id, mode, what_if, policy, model, date, json,
        ),
        Command::Bench { config, out } => cmd_bench(&config, out.as_deref()),
        Command::Report { results } => cmd_report(&results),
        Command::Serve {
            port,
            store,
            host,
            date,
            import,
        } => cmd_serve(port, store, host, date, import),
        Command::Synth {
            out,
            seed,
            mini,
            mini_size,
        } => cmd_synth(&out, seed, mini.as_deref(), mini_size),
        Command::Export { map, format } => cmd_export(&map, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
