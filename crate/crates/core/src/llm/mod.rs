//! Provider-agnostic chat-completion client.
//!
//! Three modes share one interface:
//!
//! - `live`: call an OpenAI-compatible `/chat/completions` endpoint;
//! - `record`: call live, then persist the response under its [`CacheKey`];
//! - `replay`: answer only from the cache, never touching the network.
//!
//! Configuration comes from `LLM_API_BASE`, `LLM_API_KEY`, `LLM_CACHE_DIR`
//! and `LLM_MODE`, or from [`ClientSettings`] directly.

mod cache;
mod http;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, CacheStore, IndexEntry};
pub use http::HttpBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_TOP_P: f64 = 0.01;
pub const DEFAULT_SEED: i64 = 640;
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: i64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            model: "default".into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            seed: DEFAULT_SEED,
        }
    }
}

impl DecodingConfig {
    pub fn for_model(model: impl Into<String>) -> Self {
        DecodingConfig {
            model: model.into(),
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.model.is_empty() {
            return Err("model id is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub decoding: DecodingConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    /// Decoding parameters withheld from the provider for this model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_params: Vec<String>,
}

/// Hex SHA-256 over the canonical request encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// Field order here is the canonical order; payload strings are hashed as-is.
#[derive(Serialize)]
struct KeyMaterial<'a> {
    v: u32,
    model: &'a str,
    temperature: f64,
    top_p: f64,
    seed: i64,
    system: &'a str,
    user: &'a str,
}

pub fn cache_key(req: &ChatRequest) -> CacheKey {
    let material = KeyMaterial {
        v: 1,
        model: &req.decoding.model,
        temperature: req.decoding.temperature,
        top_p: req.decoding.top_p,
        seed: req.decoding.seed,
        system: &req.system,
        user: &req.user,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    CacheKey(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no cached response for key {0}")]
    CacheMiss(CacheKey),
    #[error("transport error (HTTP {status}): {message}")]
    Status { status: u16, message: String },
    #[error("transport error: request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cache i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that can answer a [`ChatRequest`].
pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    #[default]
    Replay,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!(
                "unknown LLM mode '{other}' (expected live|record|replay)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

/// Which decoding parameters a model accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Capabilities {
    pub temperature: bool,
    pub top_p: bool,
    pub seed: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Capabilities {
            temperature: true,
            top_p: true,
            seed: true,
        }
    }
}

#[derive(Clone, Default)]
pub struct ClientSettings {
    pub mode: Mode,
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub timeout: Option<Duration>,
    pub capabilities: BTreeMap<String, Capabilities>,
}

impl fmt::Debug for ClientSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientSettings")
            .field("mode", &self.mode)
            .field("api_base", &self.api_base)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("cache_dir", &self.cache_dir)
            .field("parallelism", &self.parallelism)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ClientSettings {
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        ClientSettings {
            mode: Mode::Replay,
            cache_dir: Some(cache_dir.into()),
            parallelism: DEFAULT_PARALLELISM,
            ..Default::default()
        }
    }

    /// Reads `LLM_MODE`, `LLM_API_BASE`, `LLM_API_KEY` and `LLM_CACHE_DIR`.
    pub fn from_env() -> Result<Self, ClientError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mode = match var("LLM_MODE") {
            Some(m) => m.parse().map_err(ClientError::Config)?,
            None => Mode::default(),
        };
        Ok(ClientSettings {
            mode,
            api_base: var("LLM_API_BASE"),
            api_key: var("LLM_API_KEY"),
            cache_dir: var("LLM_CACHE_DIR").map(PathBuf::from),
            parallelism: DEFAULT_PARALLELISM,
            timeout: None,
            capabilities: BTreeMap::new(),
        })
    }
}

/// The mode-dispatching client.
pub struct LlmClient {
    mode: Mode,
    cache: Option<CacheStore>,
    http: Option<HttpBackend>,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("mode", &self.mode)
            .field("cache", &self.cache.as_ref().map(CacheStore::dir))
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    /// Validates the settings for the chosen mode and builds the client.
    pub fn new(settings: ClientSettings) -> Result<Self, ClientError> {
        let needs_http = matches!(settings.mode, Mode::Live | Mode::Record);
        let needs_cache = matches!(settings.mode, Mode::Record | Mode::Replay);

        let cache = match (&settings.cache_dir, needs_cache) {
            (Some(dir), true) => Some(CacheStore::open(dir, settings.mode == Mode::Record)?),
            (None, true) => {
                return Err(ClientError::Config(format!(
                    "{} mode requires a cache directory (LLM_CACHE_DIR)",
                    settings.mode
                )))
            }
            _ => None,
        };
        let http = if needs_http {
            let base = settings.api_base.clone().ok_or_else(|| {
                ClientError::Config(format!("{} mode requires LLM_API_BASE", settings.mode))
            })?;
            let key = settings.api_key.clone().ok_or_else(|| {
                ClientError::Config(format!("{} mode requires LLM_API_KEY", settings.mode))
            })?;
            Some(HttpBackend::new(
                base,
                key,
                settings.parallelism.max(1),
                settings.timeout.unwrap_or(Duration::from_secs(120)),
                settings.capabilities.clone(),
            )?)
        } else {
            None
        };
        Ok(LlmClient {
            mode: settings.mode,
            cache,
            http,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> Option<&CacheStore> {
        self.cache.as_ref()
    }

    /// Whether this client can reach a model endpoint at all.
    pub fn has_network(&self) -> bool {
        self.http.is_some()
    }
}

impl ChatClient for LlmClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        match self.mode {
            Mode::Replay => {
                let cache = self.cache.as_ref().expect("replay client has a cache");
                let key = cache_key(req);
                match cache.get(&key)? {
                    Some(entry) => Ok(ChatResponse {
                        latency_ms: None,
                        ..entry.response
                    }),
                    None => Err(ClientError::CacheMiss(key)),
                }
            }
            Mode::Live => self
                .http
                .as_ref()
                .expect("live client has http")
                .complete(req),
            Mode::Record => {
                let response = self
                    .http
                    .as_ref()
                    .expect("record client has http")
                    .complete(req)?;
                let cache = self.cache.as_ref().expect("record client has a cache");
                cache.put(&CacheEntry {
                    key: cache_key(req),
                    request: req.clone(),
                    response: response.clone(),
                    recorded_at: chrono::Utc::now()
                        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                })?;
                Ok(response)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest {
            system: "Du bist ein Prüfer.".into(),
            user: "Beitrag".into(),
            decoding: DecodingConfig::for_model("gpt-4o"),
        }
    }

    #[test]
    fn decoding_defaults() {
        let d = DecodingConfig::default();
        assert_eq!(d.temperature, 0.0);
        assert_eq!(d.top_p, 0.01);
        assert_eq!(d.seed, 640);
        d.check().unwrap();
    }

    #[test]
    fn decoding_ranges_checked() {
        let mut d = DecodingConfig::default();
        d.top_p = 0.0;
        assert!(d.check().is_err());
        d.top_p = 1.0;
        d.temperature = -0.1;
        assert!(d.check().is_err());
    }

    #[test]
    fn golden_cache_key() {
        assert_eq!(
            cache_key(&req()).0,
            "7d12dc1f1994a94484d5add8b9f4a2f3b17b750edf5ce0385d9b27f8c1f6d93c"
        );
    }

    #[test]
    fn key_sensitivity() {
        let base = cache_key(&req());
        assert_eq!(base, cache_key(&req()));
        let mut r = req();
        r.user.push('!');
        assert_ne!(base, cache_key(&r));
        let mut r = req();
        r.decoding.seed = 641;
        assert_ne!(base, cache_key(&r));
        let mut r = req();
        r.system = r.system.replace(' ', "  ");
        assert_ne!(base, cache_key(&r));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Replay".parse::<Mode>().unwrap(), Mode::Replay);
        assert!("offline".parse::<Mode>().is_err());
    }

    #[test]
    fn live_without_credentials_is_a_config_error() {
        let s = ClientSettings {
            mode: Mode::Live,
            api_base: Some("http://127.0.0.1:9".into()),
            ..Default::default()
        };
        assert!(
            matches!(LlmClient::new(s), Err(ClientError::Config(m)) if m.contains("LLM_API_KEY"))
        );
    }

    #[test]
    fn replay_without_cache_dir_is_a_config_error() {
        let s = ClientSettings {
            mode: Mode::Replay,
            ..Default::default()
        };
        assert!(matches!(LlmClient::new(s), Err(ClientError::Config(_))));
    }
}
