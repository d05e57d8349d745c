//! HTTPS adapters for OpenAI-compatible and Gemini chat endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Provider, ProviderError, ProviderErrorKind, ProviderProfile, ProviderResponse};

fn agent(timeout_s: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_s)))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Maps an HTTP status and body to an error kind; `None` means success.
pub(crate) fn classify_status(status: u16, body: &str) -> Option<ProviderErrorKind> {
    let lower = body.to_ascii_lowercase();
    let overflow = [
        "context_length",
        "context length",
        "maximum context",
        "too many tokens",
        "token limit",
    ]
    .iter()
    .any(|m| lower.contains(m));
    match status {
        200..=299 => None,
        401 | 403 => Some(ProviderErrorKind::AuthFailure),
        429 => Some(ProviderErrorKind::RateLimited),
        408 | 504 => Some(ProviderErrorKind::Timeout),
        400 | 413 if overflow => Some(ProviderErrorKind::ContextOverflow),
        500..=599 => Some(ProviderErrorKind::Transport),
        _ => Some(ProviderErrorKind::BadResponse),
    }
}

fn post(agent: &ureq::Agent, url: &str, headers: &[(&str, &str)], body: &Value) -> Result<String, ProviderError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = req.send(body.to_string()).map_err(|e| match e {
        ureq::Error::Timeout(_) => ProviderError::new(ProviderErrorKind::Timeout, e.to_string()),
        other => ProviderError::new(ProviderErrorKind::Transport, other.to_string()),
    })?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::new(ProviderErrorKind::Transport, e.to_string()))?;
    match classify_status(status, &text) {
        None => Ok(text),
        Some(kind) => {
            let snippet: String = text.chars().take(300).collect();
            Err(ProviderError::new(kind, format!("HTTP {status}: {snippet}")))
        }
    }
}

fn bad(msg: &str) -> ProviderError {
    ProviderError::new(ProviderErrorKind::BadResponse, msg)
}

pub struct OpenAiProvider {
    profile: ProviderProfile,
    key: String,
    agent: ureq::Agent,
}

impl OpenAiProvider {
    pub fn new(profile: ProviderProfile, key: String) -> Self {
        let agent = agent(profile.request_timeout_s);
        OpenAiProvider { profile, key, agent }
    }
}

impl Provider for OpenAiProvider {
    fn send(&self, prompt: &str) -> Result<ProviderResponse, ProviderError> {
        let mut body = json!({
            "model": self.profile.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_completion_tokens": self.profile.max_output_tokens,
        });
        if let Some(t) = self.profile.temperature {
            body["temperature"] = json!(t);
        }
        let url = format!("{}/chat/completions", self.profile.endpoint.trim_end_matches('/'));
        let auth = format!("Bearer {}", self.key);
        let text = post(&self.agent, &url, &[("Authorization", &auth)], &body)?;
        let v: Value = serde_json::from_str(&text).map_err(|_| bad("response is not JSON"))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| bad("no choices[0].message.content"))?;
        Ok(ProviderResponse {
            text: content.to_owned(),
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: v["usage"]["completion_tokens"].as_u64(),
        })
    }
}

pub struct GeminiProvider {
    profile: ProviderProfile,
    key: String,
    agent: ureq::Agent,
}

impl GeminiProvider {
    pub fn new(profile: ProviderProfile, key: String) -> Self {
        let agent = agent(profile.request_timeout_s);
        GeminiProvider { profile, key, agent }
    }
}

impl Provider for GeminiProvider {
    fn send(&self, prompt: &str) -> Result<ProviderResponse, ProviderError> {
        let mut config = json!({"maxOutputTokens": self.profile.max_output_tokens});
        if let Some(t) = self.profile.temperature {
            config["temperature"] = json!(t);
        }
        let body = json!({
            "contents": [{"role": "user", "parts": [{"text": prompt}]}],
            "generationConfig": config,
        });
        let url = format!(
            "{}/models/{}:generateContent",
            self.profile.endpoint.trim_end_matches('/'),
            self.profile.model
        );
        let text = post(&self.agent, &url, &[("x-goog-api-key", &self.key)], &body)?;
        let v: Value = serde_json::from_str(&text).map_err(|_| bad("response is not JSON"))?;
        let parts = v["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| bad("no candidates[0].content.parts"))?;
        let content: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
        Ok(ProviderResponse {
            text: content,
            prompt_tokens: v["usageMetadata"]["promptTokenCount"].as_u64(),
            completion_tokens: v["usageMetadata"]["candidatesTokenCount"].as_u64(),
        })
    }
}
