//! Benchmark configuration (TOML). Relative paths resolve against the
//! directory of the config file.
//!
//! ```toml
//! dataset = "datasets/mini.csv"
//! reference = "lay_consensus"        # or "expert_subset"
//! methods = ["rulemapping", "long_context", "zero_context"]
//! models = ["gpt-4o"]
//! rulemap = "stgb130_fine.rmap"      # rulemapping only
//! statute_pack = "statute_pack.json" # long_context only
//! cache_dir = "cache/mini"
//! output_dir = "out/mini"
//! # mode = "replay"                  # else LLM_MODE, else replay
//! parallelism = 4
//! failure_policy = "lenient"
//! eval_mode = "full"
//! evaluation_date = "2025-01-01"
//!
//! [decoding]
//! temperature = 0.0
//! top_p = 0.01
//! seed = 640
//!
//! [bootstrap]
//! resamples = 10000
//! seed = 640
//! level = 0.95
//! metrics = ["precision", "recall", "accuracy"]
//!
//! [capabilities."gpt-5-mini"]
//! temperature = false
//! top_p = false
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::metrics::MetricId;
use super::reference::ReferenceKind;
use super::BenchError;
use crate::eval::{EvalMode, FailurePolicy};
use crate::leaf::DEFAULT_TEMPLATE_ID;
use crate::llm::{
    Capabilities, Mode, DEFAULT_PARALLELISM, DEFAULT_SEED, DEFAULT_TEMPERATURE, DEFAULT_TOP_P,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rulemapping,
    LongContext,
    ZeroContext,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::Rulemapping,
        Method::LongContext,
        Method::ZeroContext,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::Rulemapping => "rulemapping",
            Method::LongContext => "long_context",
            Method::ZeroContext => "zero_context",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Rulemapping => "Rulemapping",
            Method::LongContext => "Long-Context",
            Method::ZeroContext => "Zero-Context",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingDefaults {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: i64,
}

impl Default for DecodingDefaults {
    fn default() -> Self {
        DecodingDefaults {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: u32,
    pub seed: u64,
    pub level: f64,
    pub metrics: Vec<MetricId>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 10_000,
            seed: DEFAULT_SEED as u64,
            level: 0.95,
            metrics: vec![MetricId::Precision, MetricId::Recall, MetricId::Accuracy],
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

fn default_policy() -> FailurePolicy {
    FailurePolicy::Lenient
}

fn default_template() -> String {
    DEFAULT_TEMPLATE_ID.to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_reference")]
    pub reference: ReferenceKind,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub models: Vec<String>,
    #[serde(default)]
    pub rulemap: Option<PathBuf>,
    #[serde(default)]
    pub statute_pack: Option<PathBuf>,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_policy")]
    pub failure_policy: FailurePolicy,
    #[serde(default)]
    pub eval_mode: EvalMode,
    pub evaluation_date: NaiveDate,
    #[serde(default)]
    pub decoding: DecodingDefaults,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub capabilities: BTreeMap<String, Capabilities>,
}

fn default_reference() -> ReferenceKind {
    ReferenceKind::LayConsensus
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: BenchConfig,
    pub path: PathBuf,
    pub base_dir: PathBuf,
    /// Raw file bytes; their hash identifies the configuration.
    pub raw: Vec<u8>,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, BenchError> {
        let raw = std::fs::read(path).map_err(|e| {
            BenchError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let text = std::str::from_utf8(&raw)
            .map_err(|_| BenchError::Config(format!("config {} is not UTF-8", path.display())))?;
        let config: BenchConfig = toml::from_str(text)
            .map_err(|e| BenchError::Config(format!("config {}: {e}", path.display())))?;
        config.check()?;
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            raw,
        })
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if self.models.is_empty() {
            return bad("no models configured".into());
        }
        if self.methods.contains(&Method::Rulemapping) && self.rulemap.is_none() {
            return bad("method 'rulemapping' requires 'rulemap'".into());
        }
        if self.methods.contains(&Method::LongContext) && self.statute_pack.is_none() {
            return bad("method 'long_context' requires 'statute_pack'".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad(format!(
                "bootstrap level {} outside (0, 1)",
                self.bootstrap.level
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            if !seen.insert(m) {
                return bad(format!("model '{m}' listed twice"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.methods {
            if !seen.insert(m) {
                return bad(format!("method '{m}' listed twice"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let c: BenchConfig = toml::from_str(
            r#"
            dataset = "d.csv"
            models = ["m"]
            rulemap = "r.rmap"
            statute_pack = "p.json"
            evaluation_date = "2025-01-01"
            "#,
        )
        .unwrap();
        c.check().unwrap();
        assert_eq!(c.methods, Method::ALL);
        assert_eq!(c.failure_policy, FailurePolicy::Lenient);
        assert_eq!(c.bootstrap.resamples, 10_000);
        assert_eq!(c.decoding.seed, 640);
        assert_eq!(c.mode, None);
    }

    #[test]
    fn method_paths_required() {
        let c: BenchConfig = toml::from_str(
            r#"
            dataset = "d.csv"
            models = ["m"]
            methods = ["long_context"]
            evaluation_date = "2025-01-01"
            "#,
        )
        .unwrap();
        assert!(matches!(c.check(), Err(BenchError::Config(m)) if m.contains("statute_pack")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<BenchConfig, _> = toml::from_str(
            "dataset = \"d\"\nmodels = []\nevaluation_date = \"2025-01-01\"\napi_key = \"x\"\n",
        );
        assert!(r.is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = BenchConfig::load(Path::new("missing.toml")).unwrap_err();
        assert!(err.to_string().contains("missing.toml"));
    }
}
