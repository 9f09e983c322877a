//! Chat-completion client for OpenAI-compatible endpoints.

use std::path::Path;
use std::time::{Duration, Instant};

use gaptrace_core::llm::{ChatProvider, ChatResponse, ProviderConfig, ProviderError, TokenUsage};
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{IoError, JsonlAppender};

/// Attempts per prompt, first try included.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Serialize)]
struct AuditEntry<'a> {
    at: String,
    provider: &'a str,
    model: &'a str,
    attempt: u32,
    request: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    latency_ms: u64,
}

pub struct HttpChatProvider {
    name: String,
    cfg: ProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    audit: Option<JsonlAppender>,
    backoff_base: Duration,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
    Fatal(ProviderError),
}

impl HttpChatProvider {
    /// Reads the API key from the configured environment variable.
    pub fn new(name: &str, cfg: ProviderConfig) -> Result<Self, ProviderError> {
        Self::with_key_lookup(name, cfg, &|k| std::env::var(k).ok())
    }

    pub fn with_key_lookup(
        name: &str,
        cfg: ProviderConfig,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let api_key = if cfg.api_key_env.is_empty() {
            None
        } else {
            Some(
                lookup(&cfg.api_key_env)
                    .ok_or_else(|| ProviderError::MissingApiKey(cfg.api_key_env.clone()))?,
            )
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            name: name.to_string(),
            cfg,
            api_key,
            agent,
            audit: None,
            backoff_base: Duration::from_secs(1),
        })
    }

    /// Appends every request and response to a JSON Lines file.
    pub fn with_audit_log(mut self, path: &Path) -> Result<Self, IoError> {
        self.audit = Some(JsonlAppender::open(path, false)?);
        Ok(self)
    }

    pub fn with_backoff_base(mut self, d: Duration) -> Self {
        self.backoff_base = d;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        })
    }

    fn audit(&self, attempt: u32, request: &Value, status: Option<u16>, outcome: Result<&str, &str>, latency_ms: u64) {
        let Some(log) = &self.audit else { return };
        let entry = AuditEntry {
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            provider: &self.name,
            model: &self.cfg.model,
            attempt,
            request,
            status,
            response: outcome.ok(),
            error: outcome.err(),
            latency_ms,
        };
        if let Err(e) = log.append(&entry) {
            log::warn!("audit log write failed: {e}");
        }
    }

    fn attempt(&self, attempt: u32, body: &Value) -> Attempt {
        let started = Instant::now();
        let mut req = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let result = req.send(body.to_string());
        let elapsed = || started.elapsed().as_millis() as u64;
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => {
                let msg = e.to_string();
                self.audit(attempt, body, None, Err(&msg), elapsed());
                return Attempt::Retry(msg);
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                let msg = e.to_string();
                self.audit(attempt, body, Some(status), Err(&msg), elapsed());
                return Attempt::Retry(msg);
            }
        };
        let latency_ms = elapsed();
        self.audit(attempt, body, Some(status), Ok(&text), latency_ms);
        match status {
            200..=299 => {}
            429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => {
                return Attempt::Fatal(ProviderError::Failed {
                    attempts: attempt,
                    message: format!("HTTP {status}: {}", truncate(&text, 300)),
                })
            }
        }
        let v: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("malformed response: {e}")),
        };
        let content = v["choices"][0]["message"]["content"].as_str().unwrap_or("");
        if content.trim().is_empty() {
            return Attempt::Fatal(ProviderError::EmptyResponse);
        }
        let tokens = |k: &str| v["usage"][k].as_u64().unwrap_or(0);
        Attempt::Done(ChatResponse {
            text: content.to_string(),
            usage: TokenUsage {
                prompt_tokens: tokens("prompt_tokens"),
                completion_tokens: tokens("completion_tokens"),
            },
            latency_ms,
        })
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatProvider for HttpChatProvider {
    fn chat(&self, prompt: &str) -> Result<ChatResponse, ProviderError> {
        let body = self.request_body(prompt);
        let mut last = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            match self.attempt(attempt, &body) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("{}: attempt {attempt} failed: {msg}", self.name);
                    last = msg;
                    if attempt < MAX_ATTEMPTS {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(ProviderError::Failed {
            attempts: MAX_ATTEMPTS,
            message: last,
        })
    }
}
