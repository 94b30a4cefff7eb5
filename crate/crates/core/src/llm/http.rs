use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatRequest, ChatTransport, RawCompletion, TransportFailure, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint_url: String,
    /// Header carrying the credential. `Authorization` gets a `Bearer` prefix;
    /// any other header receives the raw key.
    pub auth_header: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
}

impl HttpConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self { endpoint_url: endpoint_url.into(), auth_header: "Authorization".into(), api_key: None, timeout_ms: 120_000 }
    }
}

/// Chat-completions over HTTP: POSTs `{model, messages, temperature,
/// max_tokens}` and reads `choices[0].message.content` and `usage`.
pub struct HttpTransport {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Result<Self, TransportFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| TransportFailure::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }
}

pub(crate) fn request_body(req: &ChatRequest) -> serde_json::Value {
    json!({
        "model": req.model,
        "messages": [
            {"role": "system", "content": req.system_text},
            {"role": "user", "content": req.user_text},
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub(crate) fn parse_response(body: &str) -> Result<RawCompletion, TransportFailure> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| TransportFailure::Malformed(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| TransportFailure::Malformed("no choices".into()))?;
    Ok(RawCompletion {
        content: choice.message.content.unwrap_or_default(),
        usage: wire.usage.map(|u| Usage::new(u.prompt_tokens, u.completion_tokens)),
    })
}

impl ChatTransport for HttpTransport {
    fn send(&mut self, req: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
        let mut builder = self.client.post(&self.config.endpoint_url).json(&request_body(req));
        if let Some(key) = &self.config.api_key {
            let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            builder = builder.header(self.config.auth_header.as_str(), value);
        }
        let resp = builder.send().map_err(|e| TransportFailure::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(TransportFailure::RateLimited);
        }
        let body = resp.text().map_err(|e| TransportFailure::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportFailure::Transport(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())));
        }
        parse_response(&body)
    }
}
