//! Chat-completion style HTTP adapter.
//!
//! Request: `{"model": ..., "messages": [{"role": ..., "content": ...}]}`.
//! The reply text is read from `choices[0].message.content`, falling back to a
//! top-level `content` or `text` field.

use std::time::Duration;

use serde_json::{json, Value};

use crate::{Conversation, Reasoner, ReasonerConfig, ReasonerError, API_KEY_ENV};

pub struct HttpReasoner {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    retries: u32,
    api_key: Option<String>,
    backoff: Duration,
}

impl HttpReasoner {
    /// Reads the bearer credential from the environment.
    pub fn new(config: &ReasonerConfig) -> Self {
        Self::with_api_key(config, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(config: &ReasonerConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs.max(1))).build();
        HttpReasoner {
            agent,
            endpoint: config.endpoint.clone(),
            model: config.model_name.clone(),
            retries: config.retries,
            api_key,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, String)> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => {
                let value: Value = resp.into_json().map_err(|e| (true, format!("unreadable response: {e}")))?;
                extract_text(&value).ok_or_else(|| (false, format!("response carries no assistant text: {value}")))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let retryable = code == 429 || code >= 500;
                let body = resp.into_string().unwrap_or_default();
                Err((retryable, format!("HTTP {code}: {}", body.chars().take(300).collect::<String>())))
            }
            Err(e) => Err((true, e.to_string())),
        }
    }
}

fn extract_text(v: &Value) -> Option<String> {
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/message/content"),
        v.get("content"),
        v.get("text"),
    ];
    candidates.into_iter().flatten().find_map(|c| c.as_str().map(str::to_string))
}

impl Reasoner for HttpReasoner {
    fn name(&self) -> &str {
        "http"
    }

    fn respond(&self, conv: &Conversation) -> Result<String, ReasonerError> {
        let body = json!({
            "model": self.model,
            "messages": conv.messages(),
        });
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * attempt);
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    last_error = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(ReasonerError::ProviderUnavailable(last_error))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_common_shapes() {
        assert_eq!(
            extract_text(&json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]})).as_deref(),
            Some("hi")
        );
        assert_eq!(extract_text(&json!({"content": "yo"})).as_deref(), Some("yo"));
        assert_eq!(extract_text(&json!({"nothing": 1})), None);
    }
}
