//! OpenAI-compatible HTTP adapters (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::llm::{ChatProvider, ChatRequest, ChatResponse, ProviderFailure, Usage};
use crate::text::estimate_tokens;

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

/// Endpoint settings. The credential is read from the named environment
/// variable; config files never hold the key itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiSettings {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

pub(crate) struct ProviderClient {
    pub(crate) settings: OpenAiSettings,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl ProviderClient {
    pub(crate) fn new(settings: OpenAiSettings) -> Result<Self> {
        let api_key = match &settings.api_key_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| Error::MissingCredential(var.clone()))?),
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            settings,
            agent,
            api_key,
        })
    }

    pub(crate) fn post(&self, path: &str, body: &Value) -> std::result::Result<Value, ProviderFailure> {
        let url = format!("{}/{}", self.settings.endpoint.trim_end_matches('/'), path);
        let mut request = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| ProviderFailure::Fatal(format!("invalid JSON from {url}: {e}"))),
            429 | 500..=599 => Err(ProviderFailure::Transient(format!("HTTP {status} from {url}"))),
            _ => Err(ProviderFailure::Fatal(format!("HTTP {status} from {url}: {text}"))),
        }
    }
}

/// Chat completion over an OpenAI-compatible endpoint.
pub struct OpenAiChat {
    client: ProviderClient,
    id: String,
}

impl OpenAiChat {
    pub fn new(settings: OpenAiSettings) -> Result<Self> {
        let id = format!("openai:{}", settings.model);
        Ok(Self {
            client: ProviderClient::new(settings)?,
            id,
        })
    }
}

impl ChatProvider for OpenAiChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ProviderFailure> {
        let body = serde_json::json!({
            "model": self.client.settings.model,
            "messages": [
                { "role": "system", "content": request.system_prompt },
                { "role": "user", "content": request.user_content },
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.client.post("chat/completions", &body)?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderFailure::Fatal("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = Usage {
            input_tokens: value["usage"]["prompt_tokens"]
                .as_u64()
                .unwrap_or_else(|| request.estimated_input_tokens()),
            output_tokens: value["usage"]["completion_tokens"]
                .as_u64()
                .unwrap_or(estimate_tokens(&text) as u64),
        };
        Ok(ChatResponse {
            text,
            usage,
            provider_id: self.id.clone(),
        })
    }
}
