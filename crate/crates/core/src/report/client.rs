//! Minimal OpenAI-compatible chat-completions client with retry.

use std::fmt;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Clone)]
pub struct LlmEndpointConfig {
    /// Server root, with or without a trailing `/v1`.
    pub base_url: String,
    pub model_id: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
    /// First backoff delay; doubles on every retry.
    pub backoff_base_ms: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "http://localhost:8000".into(),
            model_id: "gpt-4o".into(),
            api_key: None,
            timeout_secs: 120,
            max_retries: 3,
            temperature: 0.2,
            backoff_base_ms: 500,
        }
    }
}

impl fmt::Debug for LlmEndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmEndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_id", &self.model_id)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("temperature", &self.temperature)
            .field("backoff_base_ms", &self.backoff_base_ms)
            .finish()
    }
}

impl LlmEndpointConfig {
    /// Fills `api_key` from the environment when unset.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ReportError::InvalidConfig(format!(
                "base_url must start with http:// or https://, got {:?}",
                self.base_url
            )));
        }
        if self.model_id.trim().is_empty() {
            return Err(ReportError::InvalidConfig("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ReportError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.timeout_secs == 0 {
            return Err(ReportError::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("endpoint rejected credentials (HTTP {status}); set {API_KEY_ENV}")]
    Auth { status: u16 },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("completion contained no text")]
    EmptyCompletion,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("could not decode completion: {0}")]
    Decode(String),
    #[error("invalid endpoint configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
}

fn attempt(
    http: &reqwest::blocking::Client,
    cfg: &LlmEndpointConfig,
    body: &serde_json::Value,
) -> Result<Attempt, ReportError> {
    let mut req = http.post(cfg.completions_url()).json(body);
    if let Some(key) = &cfg.api_key {
        req = req.bearer_auth(key);
    }
    let resp = match req.send() {
        Ok(r) => r,
        Err(e) => return Ok(Attempt::Retry(format!("transport: {e}"))),
    };
    let status = resp.status().as_u16();
    match status {
        200..=299 => {}
        401 | 403 => return Err(ReportError::Auth { status }),
        429 | 500..=599 => return Ok(Attempt::Retry(format!("HTTP {status}"))),
        _ => {
            let body = resp.text().unwrap_or_default();
            return Err(ReportError::Http {
                status,
                body: body.chars().take(500).collect(),
            });
        }
    }
    let parsed: Completion = resp
        .json()
        .map_err(|e| ReportError::Decode(e.to_string()))?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .filter(|t| !t.trim().is_empty())
        .ok_or(ReportError::EmptyCompletion)?;
    Ok(Attempt::Done(text))
}

/// Sends one system and one user message. Returns the completion text and
/// the number of retried attempts.
pub(crate) fn complete(
    cfg: &LlmEndpointConfig,
    system: &str,
    user: &str,
) -> Result<(String, u32), ReportError> {
    cfg.validate()?;
    let http = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| ReportError::InvalidConfig(e.to_string()))?;
    let body = json!({
        "model": cfg.model_id,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    });

    let mut retries = 0;
    loop {
        match attempt(&http, cfg, &body)? {
            Attempt::Done(text) => return Ok((text, retries)),
            Attempt::Retry(last) => {
                if retries >= cfg.max_retries {
                    return Err(ReportError::RetriesExhausted {
                        attempts: retries + 1,
                        last,
                    });
                }
                let delay = cfg.backoff_base_ms.saturating_mul(1 << retries.min(16));
                log::warn!("LLM request failed ({last}); retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
                retries += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joins_once() {
        let mut c = LlmEndpointConfig {
            base_url: "http://h:1/".into(),
            ..Default::default()
        };
        assert_eq!(c.completions_url(), "http://h:1/v1/chat/completions");
        c.base_url = "https://h/v1".into();
        assert_eq!(c.completions_url(), "https://h/v1/chat/completions");
    }

    #[test]
    fn debug_redacts_key() {
        let c = LlmEndpointConfig {
            api_key: Some("sk-secret".into()),
            ..Default::default()
        };
        let s = format!("{c:?}");
        assert!(!s.contains("sk-secret"));
        assert!(s.contains("<redacted>"));
    }

    #[test]
    fn validate_rejects_bad_config() {
        let ok = LlmEndpointConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            LlmEndpointConfig { base_url: "ftp://x".into(), ..ok.clone() },
            LlmEndpointConfig { model_id: " ".into(), ..ok.clone() },
            LlmEndpointConfig { temperature: 3.0, ..ok.clone() },
            LlmEndpointConfig { timeout_secs: 0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(ReportError::InvalidConfig(_))));
        }
    }
}
