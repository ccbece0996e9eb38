//! Scripted, deterministic chat provider for offline runs.
//!
//! A script is a JSON list of rules. A request is answered by, in order: the
//! first rule whose `digest` equals [`request_digest`] of the request, then the
//! first rule for the stage whose `contains` substrings all occur in the user
//! content, then the first rule for the stage with neither key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::llm::{ChatProvider, ChatRequest, ChatResponse, ProviderFailure, Stage, Usage};
use crate::text::estimate_tokens;

pub const MOCK_SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub responses: Vec<MockRule>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: MockScript =
            serde_json::from_str(&raw).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
        if script.version != MOCK_SCRIPT_VERSION {
            return Err(Error::SchemaVersion {
                context: path.display().to_string(),
                found: script.version,
                expected: MOCK_SCRIPT_VERSION,
            });
        }
        Ok(script)
    }
}

/// Hex SHA-256 of `stage` and `user_content`, the key scripts use to address one call.
pub fn request_digest(stage: Stage, user_content: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(user_content.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    rules: Vec<MockRule>,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self { rules: script.responses }
    }

    pub fn from_rules(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    pub fn lookup(&self, stage: Stage, user_content: &str) -> Option<&str> {
        let digest = request_digest(stage, user_content);
        let for_stage = || self.rules.iter().filter(move |r| r.stage == stage);
        for_stage()
            .find(|r| r.digest.as_deref() == Some(digest.as_str()))
            .or_else(|| {
                for_stage().find(|r| {
                    r.digest.is_none()
                        && !r.contains.is_empty()
                        && r.contains.iter().all(|needle| user_content.contains(needle.as_str()))
                })
            })
            .or_else(|| for_stage().find(|r| r.digest.is_none() && r.contains.is_empty()))
            .map(|r| r.response.as_str())
    }
}

impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn chat(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ProviderFailure> {
        let text = self.lookup(request.stage, &request.user_content).ok_or_else(|| {
            ProviderFailure::Fatal(format!(
                "no scripted response for stage {} (digest {})",
                request.stage,
                request_digest(request.stage, &request.user_content)
            ))
        })?;
        Ok(ChatResponse {
            text: text.to_string(),
            usage: Usage {
                input_tokens: request.estimated_input_tokens(),
                output_tokens: estimate_tokens(text) as u64,
            },
            provider_id: "mock".into(),
        })
    }
}
