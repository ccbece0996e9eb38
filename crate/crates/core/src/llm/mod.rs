//! Provider-agnostic chat and embedding access.
//!
//! Every agent call goes through [`LlmGateway::complete`], which routes the
//! request to the provider configured for its pipeline stage, retries
//! transient transport failures and records usage.

mod decompose;
mod embed;
mod http;
mod mock;
mod prompts;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::text::estimate_tokens;
use crate::Expert;

pub use decompose::{decompose_note, parse_sub_queries, Decomposition, MAX_SUB_QUERIES, MIN_SUB_QUERIES};
pub use embed::{cosine_similarity, Embedder, EmbeddingService, HashEmbedder, OpenAiEmbedder};
pub use http::{OpenAiChat, OpenAiSettings};
pub use mock::{request_digest, MockProvider, MockRule, MockScript};
pub use prompts::{PromptLibrary, PromptMode, TemplateId, BUILTIN_EXEMPLARS};

/// Pipeline stage a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "decompose")]
    Decompose,
    #[serde(rename = "expert_A_r1")]
    ExpertAR1,
    #[serde(rename = "expert_B_r1")]
    ExpertBR1,
    #[serde(rename = "expert_A_r2")]
    ExpertAR2,
    #[serde(rename = "expert_B_r2")]
    ExpertBR2,
    #[serde(rename = "judge")]
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Decompose,
        Stage::ExpertAR1,
        Stage::ExpertBR1,
        Stage::ExpertAR2,
        Stage::ExpertBR2,
        Stage::Judge,
    ];

    pub fn expert(expert: Expert, round: u8) -> Stage {
        match (expert, round) {
            (Expert::A, 1) => Stage::ExpertAR1,
            (Expert::B, 1) => Stage::ExpertBR1,
            (Expert::A, _) => Stage::ExpertAR2,
            (Expert::B, _) => Stage::ExpertBR2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::ExpertAR1 => "expert_A_r1",
            Stage::ExpertBR1 => "expert_B_r1",
            Stage::ExpertAR2 => "expert_A_r2",
            Stage::ExpertBR2 => "expert_B_r2",
            Stage::Judge => "judge",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

/// Sampling settings applied to every agent call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_content: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stage: Stage,
}

impl ChatRequest {
    pub fn new(stage: Stage, system_prompt: impl Into<String>, user_content: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_content: user_content.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            stage,
        }
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// Local estimate of prompt size, used by providers that report no usage.
    pub fn estimated_input_tokens(&self) -> u64 {
        (estimate_tokens(&self.system_prompt) + estimate_tokens(&self.user_content)) as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub provider_id: String,
}

/// Why a provider call failed. Only transient failures are retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    Transient(String),
    Fatal(String),
}

impl fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderFailure::Transient(m) => write!(f, "transient: {m}"),
            ProviderFailure::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;

    fn chat(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ProviderFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            initial_backoff_ms: 0,
            backoff_multiplier: 1.0,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.backoff_multiplier.powi(attempt as i32);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            backoff_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageUsage {
    pub calls: u64,
    pub attempts: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Per-stage call counts and token totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub stages: BTreeMap<Stage, StageUsage>,
}

impl LedgerSnapshot {
    pub fn record(&mut self, stage: Stage, attempts: u64, usage: Option<Usage>) {
        let entry = self.stages.entry(stage).or_default();
        entry.attempts += attempts;
        if let Some(u) = usage {
            entry.calls += 1;
            entry.input_tokens += u.input_tokens;
            entry.output_tokens += u.output_tokens;
        }
    }

    pub fn merge(&mut self, other: &LedgerSnapshot) {
        for (stage, u) in &other.stages {
            let entry = self.stages.entry(*stage).or_default();
            entry.calls += u.calls;
            entry.attempts += u.attempts;
            entry.input_tokens += u.input_tokens;
            entry.output_tokens += u.output_tokens;
        }
    }

    pub fn total_calls(&self) -> u64 {
        self.stages.values().map(|u| u.calls).sum()
    }

    pub fn total_input_tokens(&self) -> u64 {
        self.stages.values().map(|u| u.input_tokens).sum()
    }

    pub fn total_output_tokens(&self) -> u64 {
        self.stages.values().map(|u| u.output_tokens).sum()
    }

    pub fn calls(&self, stage: Stage) -> u64 {
        self.stages.get(&stage).map_or(0, |u| u.calls)
    }
}

/// Internally synchronized usage ledger shared across concurrent calls.
#[derive(Debug, Default)]
pub struct UsageLedger {
    inner: Mutex<LedgerSnapshot>,
}

impl UsageLedger {
    pub fn record(&self, stage: Stage, attempts: u64, usage: Option<Usage>) {
        self.inner
            .lock()
            .expect("ledger lock poisoned")
            .record(stage, attempts, usage);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.inner.lock().expect("ledger lock poisoned").clone()
    }
}

/// Chat providers per role.
#[derive(Clone)]
pub struct RoleProviders {
    pub decomposer: Arc<dyn ChatProvider>,
    pub expert_a: Arc<dyn ChatProvider>,
    pub expert_b: Arc<dyn ChatProvider>,
    pub judge: Arc<dyn ChatProvider>,
}

impl RoleProviders {
    /// The same provider for every role.
    pub fn uniform(provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            decomposer: provider.clone(),
            expert_a: provider.clone(),
            expert_b: provider.clone(),
            judge: provider,
        }
    }

    fn for_stage(&self, stage: Stage) -> &Arc<dyn ChatProvider> {
        match stage {
            Stage::Decompose => &self.decomposer,
            Stage::ExpertAR1 | Stage::ExpertAR2 => &self.expert_a,
            Stage::ExpertBR1 | Stage::ExpertBR2 => &self.expert_b,
            Stage::Judge => &self.judge,
        }
    }
}

pub struct LlmGateway {
    providers: RoleProviders,
    retry: RetryPolicy,
    ledger: UsageLedger,
}

impl LlmGateway {
    pub fn new(providers: RoleProviders, retry: RetryPolicy) -> Self {
        Self {
            providers,
            retry,
            ledger: UsageLedger::default(),
        }
    }

    /// Sends `request` to the provider bound to its stage.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        self.complete_tracked(request, None)
    }

    /// Like [`complete`](Self::complete), also recording into a per-note ledger.
    pub fn complete_tracked(&self, request: &ChatRequest, note_ledger: Option<&UsageLedger>) -> Result<ChatResponse> {
        let record = |attempts: u64, usage: Option<Usage>| {
            self.ledger.record(request.stage, attempts, usage);
            if let Some(l) = note_ledger {
                l.record(request.stage, attempts, usage);
            }
        };
        request.validate()?;
        let provider = self.providers.for_stage(request.stage);
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            match provider.chat(request) {
                Ok(response) => {
                    record(attempts, Some(response.usage));
                    return Ok(response);
                }
                Err(ProviderFailure::Transient(message)) if attempts <= u64::from(self.retry.max_retries) => {
                    warn!(stage = %request.stage, attempt = attempts, %message, "retrying provider call");
                    thread::sleep(self.retry.backoff(attempts as u32 - 1));
                }
                Err(failure) => {
                    record(attempts, None);
                    return Err(Error::Provider {
                        stage: request.stage,
                        message: format!("{failure} after {attempts} attempt(s)"),
                    });
                }
            }
        }
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }
}
