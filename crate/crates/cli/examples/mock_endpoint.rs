//! OpenAI-compatible chat endpoint backed by the synthetic responder.
//!
//! ```sh
//! cargo run -p rulemap-cli --example mock_endpoint -- 127.0.0.1:8790
//! LLM_MODE=record LLM_API_BASE=http://127.0.0.1:8790/v1 LLM_API_KEY=dummy \
//!     rulemap bench --config fixtures/bench/mini.toml
//! ```

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use rulemap_core::bench::synth::SyntheticResponder;
use rulemap_core::llm::{ChatRequest, DecodingConfig};
use serde_json::{json, Value};

fn message(body: &Value, role: &str) -> String {
    body["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .find(|m| m["role"] == role)
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_owned()
}

async fn completions(
    State(r): State<Arc<SyntheticResponder>>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let Some(model) = body["model"].as_str() else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "model missing"})),
        );
    };
    let req = ChatRequest {
        system: message(&body, "system"),
        user: message(&body, "user"),
        decoding: DecodingConfig {
            model: model.to_owned(),
            temperature: body["temperature"].as_f64().unwrap_or(0.0),
            top_p: body["top_p"].as_f64().unwrap_or(0.01),
            seed: body["seed"].as_i64().unwrap_or(640),
        },
    };
    let text = r.answer(&req);
    (
        StatusCode::OK,
        Json(json!({
            "id": "mock",
            "object": "chat.completion",
            "model": model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": (req.system.len() + req.user.len()) / 4, "completion_tokens": 1},
        })),
    )
}

#[tokio::main]
async fn main() {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8790".into());
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .route("/chat/completions", post(completions))
        .with_state(Arc::new(SyntheticResponder::default()));
    let listener = tokio::net::TcpListener::bind(&addr).await.expect("bind");
    eprintln!("mock endpoint on http://{addr}/v1");
    axum::serve(listener, app).await.expect("serve");
}
