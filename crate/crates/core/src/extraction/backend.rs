//! Completion backends: scripted mock, OpenAI-style chat endpoint, and a
//! deterministic rule-based stand-in.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{HttpError, JsonClient, RetryExhausted, RetryPolicy};

use super::prompt::{prompt_chunks, prompt_target};
use super::rules;
use super::schema::{Record, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend request failed: {0}")]
    Http(#[from] RetryExhausted),
    #[error("backend response malformed: {0}")]
    Malformed(String),
    #[error("mock backend has no response for prompt {0}")]
    NoScriptedResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays canned completions: first by exact prompt hash, then from a
/// FIFO script, then a fixed fallback if one is set.
#[derive(Debug, Default)]
pub struct MockBackend {
    by_hash: HashMap<String, String>,
    script: Mutex<VecDeque<String>>,
    fallback: Option<String>,
    calls: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockBackend { script: Mutex::new(responses.into_iter().map(Into::into).collect()), ..Default::default() }
    }

    pub fn with_response(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.by_hash.insert(prompt_hash(prompt), response.into());
        self
    }

    pub fn with_hashed(mut self, hash: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_hash.insert(hash.into(), response.into());
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    /// Prompts seen so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(prompt.to_string());
        let hash = prompt_hash(prompt);
        if let Some(r) = self.by_hash.get(&hash) {
            return Ok(r.clone());
        }
        if let Some(r) = self.script.lock().unwrap_or_else(|e| e.into_inner()).pop_front() {
            return Ok(r);
        }
        self.fallback.clone().ok_or(BackendError::NoScriptedResponse(hash))
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Deterministic extraction from the chunk blocks of a prompt. Ignores
/// exemplars and feedback.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBackend;

impl RuleBackend {
    pub fn extract(target: Target, text: &str) -> Record {
        match target {
            Target::Phenotype => Record::Phenotype(rules::extract_phenotype(text)),
            Target::Outcome => Record::Outcome(rules::extract_outcome(text)),
        }
    }
}

impl LlmBackend for RuleBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let target = prompt_target(prompt).ok_or_else(|| BackendError::Malformed("prompt names no target".into()))?;
        let text = prompt_chunks(prompt).join("\n");
        let rec = Self::extract(target, &text);
        serde_json::to_string(&rec).map_err(|e| BackendError::Malformed(e.to_string()))
    }

    fn name(&self) -> &str {
        "rules"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        HttpChatConfig {
            endpoint: "http://localhost:11434/v1/chat/completions".into(),
            model: "llama3.1:8b-instruct".into(),
            temperature: 0.0,
            api_key_env: Some("ONCOSURV_LLM_API_KEY".into()),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Client for an OpenAI-style chat completions endpoint.
#[derive(Debug)]
pub struct HttpChatBackend {
    client: JsonClient,
    model: String,
    temperature: f64,
}

impl HttpChatBackend {
    pub fn new(cfg: &HttpChatConfig) -> Result<Self, BackendError> {
        let token = cfg.api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
        let client = JsonClient::new(&cfg.endpoint, token, cfg.retry.clone(), cfg.max_in_flight)
            .map_err(|e: HttpError| BackendError::Config(e.to_string()))?;
        Ok(HttpChatBackend { client, model: cfg.model.clone(), temperature: cfg.temperature })
    }
}

impl LlmBackend for HttpChatBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let resp = self.client.post(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::schema::parse_and_validate;
    use crate::http::testing;

    #[test]
    fn mock_prefers_hash_then_script_then_fallback() {
        let m = MockBackend::scripted(["first", "second"]).with_response("known", "hashed").with_fallback("fb");
        assert_eq!(m.complete("known").unwrap(), "hashed");
        assert_eq!(m.complete("x").unwrap(), "first");
        assert_eq!(m.complete("y").unwrap(), "second");
        assert_eq!(m.complete("z").unwrap(), "fb");
        assert_eq!(m.calls().len(), 4);
    }

    #[test]
    fn mock_without_response_errors() {
        assert!(matches!(MockBackend::new().complete("p"), Err(BackendError::NoScriptedResponse(_))));
    }

    #[test]
    fn rule_backend_output_validates() {
        let prompt = "TARGET: outcome\n<<<CHUNK id=n#0 rank=1>>>\nThe patient died on 2021-02-03.\n<<<END CHUNK>>>\n";
        let out = RuleBackend.complete(prompt).unwrap();
        let Record::Outcome(o) = parse_and_validate(&out, "outcome.v1").unwrap() else { panic!() };
        assert!(o.death_hospice.died);
    }

    #[test]
    fn http_chat_round_trip() {
        let stub = testing::serve(vec![(200, r#"{"choices":[{"message":{"role":"assistant","content":"{}"}}]}"#.into())]);
        let cfg = HttpChatConfig { endpoint: stub.url.clone(), api_key_env: None, ..Default::default() };
        let b = HttpChatBackend::new(&cfg).unwrap();
        assert_eq!(b.complete("hello").unwrap(), "{}");
        let sent: serde_json::Value = serde_json::from_str(&stub.bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["temperature"], json!(0.0));
        assert_eq!(sent["messages"][0]["content"], json!("hello"));
    }

    #[test]
    fn http_chat_missing_content() {
        let stub = testing::serve(vec![(200, r#"{"choices":[]}"#.into())]);
        let cfg = HttpChatConfig { endpoint: stub.url.clone(), api_key_env: None, ..Default::default() };
        assert!(matches!(HttpChatBackend::new(&cfg).unwrap().complete("p"), Err(BackendError::Malformed(_))));
    }
}
