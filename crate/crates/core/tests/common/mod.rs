#![allow(dead_code)]

pub mod props;

use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};

use bluemed::config::{Overrides, RunConfig};
use bluemed::debate::ExpertArgument;
use bluemed::eval::{load_dataset, EvalRecord, ScoreMode};
use bluemed::llm::{
    ChatProvider, ChatRequest, ChatResponse, LlmGateway, MockProvider, MockScript, ProviderFailure, RetryPolicy,
    RoleProviders,
};
use bluemed::pipeline::{NoteRunner, PipelineKind};
use bluemed::safety::SafetyLayer;
use bluemed::{Expert, Label};
use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_records() -> Vec<EvalRecord> {
    load_dataset(&fixtures().join("medec_fixture.csv")).expect("fixture dataset loads")
}

/// The shipped fixture config with the KB and run output redirected into `dir`.
pub fn fixture_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixtures().join("bluemed.toml")).expect("fixture config loads");
    cfg.kb.root = dir.join("kb");
    cfg.run.output_dir = dir.join("runs");
    cfg
}

/// A temp dir holding a freshly built fixture KB, plus the config pointing at it.
pub struct Workspace {
    pub dir: TempDir,
    pub config: RunConfig,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture_config(dir.path());
        config.build_kb(false).expect("fixture KB builds");
        Self { dir, config }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Writes the config as TOML and returns its path.
    pub fn write_config(&self, name: &str, config: &RunConfig) -> PathBuf {
        let path = self.path().join(name);
        std::fs::write(&path, config.to_toml().unwrap()).unwrap();
        path
    }

    pub fn runner(&self, pipeline: PipelineKind) -> NoteRunner {
        let ctx = self.config.debate_context(pipeline, &Overrides::default()).unwrap();
        NoteRunner::new(ctx, pipeline, ScoreMode::Confidence).unwrap()
    }

    /// Same as [`Workspace::runner`] but every LLM request is also recorded.
    pub fn recording_runner(&self, pipeline: PipelineKind) -> (NoteRunner, Arc<RecordingProvider>) {
        let recorder = Arc::new(RecordingProvider::fixture());
        let mut ctx = self.config.debate_context(pipeline, &Overrides::default()).unwrap();
        ctx.gateway = Arc::new(LlmGateway::new(RoleProviders::uniform(recorder.clone()), RetryPolicy::none()));
        (NoteRunner::new(ctx, pipeline, ScoreMode::Confidence).unwrap(), recorder)
    }
}

/// Wraps a mock and keeps a copy of every request it serves.
pub struct RecordingProvider {
    inner: MockProvider,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl RecordingProvider {
    pub fn new(inner: MockProvider) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn fixture() -> Self {
        Self::new(MockProvider::new(
            MockScript::load(&fixtures().join("mock_script.json")).unwrap(),
        ))
    }

    pub fn taken(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatProvider for RecordingProvider {
    fn id(&self) -> &str {
        "recording"
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderFailure> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.chat(request)
    }
}

/// Built once; compiling the lexicon matchers dominates small tests.
pub static LAYER: LazyLock<Arc<SafetyLayer>> = LazyLock::new(|| Arc::new(SafetyLayer::default()));

/// A parsed argument with the given fields. `raw` feeds the uncertainty count
/// and inline term extraction.
pub fn argument(
    expert: Expert,
    label: Label,
    wrong: Option<&str>,
    correct: Option<&str>,
    confidence: Option<f64>,
    raw: &str,
) -> ExpertArgument {
    let mut a = ExpertArgument::unparsed(raw, expert, 1, LAYER.uncertainty_matcher());
    a.label = label;
    a.wrong_term = wrong.map(String::from);
    a.correct_term = correct.map(String::from);
    a.confidence = confidence;
    a.label_parsed = true;
    a
}
