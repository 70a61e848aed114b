use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Resolved key; read from the environment variable named in config.
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpSettings {
    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    fn unavailable(&self, reason: impl Into<String>) -> GatewayError {
        GatewayError::BackendUnavailable { backend: self.name.clone(), reason: reason.into() }
    }

    pub(crate) fn post_json<T: DeserializeOwned>(&self, path: &str, payload: &serde_json::Value) -> Result<T, GatewayError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.url(path)).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(payload).map_err(|e| self.unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| self.unavailable(e.to_string()))?;
        if status >= 400 {
            let lowered = body.to_lowercase();
            if lowered.contains("context_length_exceeded") || lowered.contains("maximum context length") {
                return Err(GatewayError::ContextOverflow { backend: self.name.clone(), detail: truncate(&body, 300) });
            }
            return Err(self.unavailable(format!("HTTP {status}: {}", truncate(&body, 300))));
        }
        serde_json::from_str(&body).map_err(|e| self.unavailable(format!("malformed response body: {e}")))
    }
}

fn truncate(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

/// Live chat backend speaking the chat-completions protocol.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    settings: HttpSettings,
    /// Prompt budget in tokens; requests estimated above it fail fast.
    context_limit: u32,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings, context_limit: u32) -> Self {
        Self { settings, context_limit }
    }
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        // Rough estimate, 4 bytes per token.
        let prompt_bytes: usize = request.messages.iter().map(|m| m.content.len()).sum();
        let estimate = (prompt_bytes / 4) as u64;
        if estimate > u64::from(self.context_limit) {
            return Err(GatewayError::ContextOverflow {
                backend: self.settings.name.clone(),
                detail: format!("~{estimate} prompt tokens > limit {}", self.context_limit),
            });
        }
        let payload = serde_json::json!({
            "model": self.settings.model,
            "messages": request.messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        let body: CompletionBody = self.settings.post_json("chat/completions", &payload)?;
        let text = body
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| self.settings.unavailable("completion carried no message content"))?;
        Ok(ChatResponse { text, usage: body.usage, backend_id: request.backend_id.clone() })
    }
}
