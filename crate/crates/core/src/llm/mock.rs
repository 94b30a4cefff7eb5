use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatTransport, Clock, RawCompletion, TransportFailure, Usage};

/// Scripted reply for one prompt. `errors` are HTTP statuses returned, in
/// order, before the content is served (429 means rate limited).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

/// Offline completions keyed by SHA-256 (hex) of the user prompt text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub default: String,
    #[serde(default)]
    pub responses: BTreeMap<String, ScriptedResponse>,
}

pub fn prompt_key(user_text: &str) -> String {
    hex::encode(Sha256::digest(user_text.as_bytes()))
}

impl MockFixture {
    pub fn with_default(content: impl Into<String>) -> Self {
        Self { default: content.into(), responses: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Registers a reply for the prompt whose user text is `user_text`.
    pub fn insert(&mut self, user_text: &str, response: ScriptedResponse) {
        self.responses.insert(prompt_key(user_text), response);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportCall {
    pub key: String,
    pub at_ms: u64,
}

pub struct MockTransport {
    fixture: MockFixture,
    failures_served: HashMap<String, usize>,
    clock: Option<Arc<dyn Clock>>,
    calls: Vec<TransportCall>,
}

impl MockTransport {
    pub fn new(fixture: MockFixture) -> Self {
        Self { fixture, failures_served: HashMap::new(), clock: None, calls: Vec::new() }
    }

    /// Timestamps each call with `clock`, for pacing checks.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn calls(&self) -> &[TransportCall] {
        &self.calls
    }
}

impl ChatTransport for MockTransport {
    fn send(&mut self, req: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
        let key = prompt_key(&req.user_text);
        let at_ms = self.clock.as_ref().map_or(0, |c| c.now_ms());
        self.calls.push(TransportCall { key: key.clone(), at_ms });
        let Some(scripted) = self.fixture.responses.get(&key) else {
            return Ok(RawCompletion { content: self.fixture.default.clone(), usage: None });
        };
        let served = self.failures_served.entry(key).or_default();
        if let Some(&status) = scripted.errors.get(*served) {
            *served += 1;
            return Err(match status {
                429 => TransportFailure::RateLimited,
                other => TransportFailure::Transport(format!("HTTP {other} (scripted)")),
            });
        }
        Ok(RawCompletion { content: scripted.content.clone(), usage: scripted.usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trips_through_json() {
        let mut f = MockFixture::with_default("none");
        f.insert("hello", ScriptedResponse { content: "c".into(), errors: vec![429], usage: Some(Usage::new(1, 2)) });
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<MockFixture>(&text).unwrap(), f);
        assert!(f.responses.contains_key(&prompt_key("hello")));
    }

    #[test]
    fn unmapped_prompts_get_the_default() {
        let mut t = MockTransport::new(MockFixture::with_default("dflt"));
        let req = ChatRequest { model: "m".into(), system_text: String::new(), user_text: "u".into(), temperature: 0.0, max_tokens: 1 };
        assert_eq!(t.send(&req).unwrap().content, "dflt");
    }
}
