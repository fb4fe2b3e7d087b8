//! OpenAI-compatible chat-completions transport.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Capabilities, ChatRequest, ChatResponse, ClientError, Usage};

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
    permits: Permits,
    capabilities: BTreeMap<String, Capabilities>,
}

impl HttpBackend {
    pub fn new(
        api_base: String,
        api_key: String,
        parallelism: usize,
        timeout: Duration,
        capabilities: BTreeMap<String, Capabilities>,
    ) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", api_base.trim_end_matches('/'));
        Ok(HttpBackend {
            endpoint,
            api_key,
            client,
            permits: Permits {
                free: Mutex::new(parallelism),
                cv: Condvar::new(),
            },
            capabilities,
        })
    }

    /// Request body with unsupported decoding fields removed.
    pub fn body(&self, req: &ChatRequest) -> (Value, Vec<String>) {
        let caps = self
            .capabilities
            .get(&req.decoding.model)
            .copied()
            .unwrap_or_default();
        let mut body = json!({
            "model": req.decoding.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        });
        let mut dropped = Vec::new();
        let obj = body.as_object_mut().expect("object literal");
        if caps.temperature {
            obj.insert("temperature".into(), json!(req.decoding.temperature));
        } else {
            dropped.push("temperature".to_owned());
        }
        if caps.top_p {
            obj.insert("top_p".into(), json!(req.decoding.top_p));
        } else {
            dropped.push("top_p".to_owned());
        }
        if caps.seed {
            obj.insert("seed".into(), json!(req.decoding.seed));
        } else {
            dropped.push("seed".to_owned());
        }
        (body, dropped)
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let (body, dropped_params) = self.body(req);
        let _permit = self.permits.acquire();
        let started = Instant::now();
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(map_reqwest)?;
        let status = resp.status();
        let text = resp.text().map_err(map_reqwest)?;
        if !status.is_success() {
            let mut message = text;
            message.truncate(500);
            return Err(ClientError::Status {
                status: status.as_u16(),
                message,
            });
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::Transport(format!("malformed response body: {e}")))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                ClientError::Transport("response has no choices[0].message.content".into())
            })?
            .to_owned();
        let usage = Usage {
            prompt_tokens: v
                .pointer("/usage/prompt_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
            completion_tokens: v
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        Ok(ChatResponse {
            text: content,
            usage,
            latency_ms: Some(latency_ms),
            dropped_params,
        })
    }
}

fn map_reqwest(e: reqwest::Error) -> ClientError {
    if e.is_timeout() {
        ClientError::Timeout
    } else {
        ClientError::Transport(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::DecodingConfig;

    #[test]
    fn unsupported_params_are_dropped() {
        let mut caps = BTreeMap::new();
        caps.insert(
            "o1".to_owned(),
            Capabilities {
                temperature: false,
                top_p: false,
                seed: true,
            },
        );
        let backend = HttpBackend::new(
            "http://x/v1/".into(),
            "k".into(),
            1,
            Duration::from_secs(1),
            caps,
        )
        .unwrap();
        assert_eq!(backend.endpoint, "http://x/v1/chat/completions");
        let req = ChatRequest {
            system: "s".into(),
            user: "u".into(),
            decoding: DecodingConfig::for_model("o1"),
        };
        let (body, dropped) = backend.body(&req);
        assert_eq!(dropped, ["temperature", "top_p"]);
        assert!(body.get("temperature").is_none());
        assert_eq!(body["seed"], 640);

        let req = ChatRequest {
            decoding: DecodingConfig::for_model("gpt-4o"),
            ..req
        };
        let (body, dropped) = backend.body(&req);
        assert!(dropped.is_empty());
        assert_eq!(body["top_p"], 0.01);
    }
}
