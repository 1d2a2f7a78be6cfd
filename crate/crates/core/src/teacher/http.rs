//! Generic chat-completion client.
//!
//! Sends `{"model", "messages": [{"role": "user", "content": prompt}],
//! "temperature", "max_tokens"}` and reads `choices[0].message.content` plus
//! the optional `usage` block. Provider specifics (endpoint, model id,
//! credential variable) are configuration.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendError, Completion, TeacherBackend, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    /// Environment variable holding a bearer token; `None` sends no
    /// Authorization header.
    pub api_key_env: Option<String>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "teacher".into(),
            temperature: 1.0,
            max_output_tokens: 4096,
            timeout_secs: 120,
            api_key_env: None,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, api_key })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }
}

/// Pulls the message text and usage out of a chat-completion response body.
pub(crate) fn read_chat_response(body: &Value) -> Result<Completion, BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = body.get("usage").and_then(|u| {
        let field = |names: [&str; 2]| names.iter().find_map(|n| u.get(*n).and_then(Value::as_u64));
        Some(TokenUsage {
            input_tokens: field(["prompt_tokens", "input_tokens"])?,
            output_tokens: field(["completion_tokens", "output_tokens"])?,
        })
    });
    Ok(Completion { text, usage })
}

impl TeacherBackend for HttpBackend {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        let request = ChatRequest {
            model: &self.config.model,
            messages: [Message { role: "user", content: prompt }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        };
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&request)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Status { status, body });
        }
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        read_chat_response(&body)
    }
}
