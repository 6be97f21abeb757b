use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ChatResponse, ProviderError};

pub const API_KEY_ENV: &str = "SYNTHEX_API_KEY";
pub const API_BASE_ENV: &str = "SYNTHEX_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

/// OpenAI-compatible `/chat/completions` adapter.
pub struct HttpChatProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpChatProvider {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        HttpChatProvider { base_url: base_url.trim_end_matches('/').to_string(), api_key, agent: ureq::agent() }
    }

    /// Reads the base URL and key from the environment.
    pub fn from_env() -> Self {
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Self::new(&base, std::env::var(API_KEY_ENV).ok())
    }

    pub fn body(req: &ChatRequest) -> serde_json::Value {
        json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
    }
}

fn classify(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => ProviderError::Transient(format!("HTTP {code}")),
        ureq::Error::StatusCode(code) => ProviderError::Fatal(format!("HTTP {code}")),
        other => ProviderError::Transient(other.to_string()),
    }
}

impl ChatProvider for HttpChatProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut call = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let completion: Completion = call
            .send_json(Self::body(req))
            .map_err(classify)?
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Fatal(format!("malformed completion: {e}")))?;
        let choice = completion
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Fatal("completion has no choices".into()))?;
        let usage = completion.usage.unwrap_or(Usage { prompt_tokens: 0, completion_tokens: 0 });
        let mut metadata = BTreeMap::new();
        metadata.insert("provider".into(), "http".into());
        for (k, v) in [("id", completion.id), ("model", completion.model), ("finish_reason", choice.finish_reason)] {
            if let Some(v) = v {
                metadata.insert(k.into(), v);
            }
        }
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            metadata,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_shape() {
        let b = HttpChatProvider::body(&ChatRequest::new("gpt-4-turbo", "sys", "usr"));
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"], "usr");
        assert_eq!(b["temperature"], 0.0);
        assert_eq!(b["max_tokens"], 1024);
    }
}
