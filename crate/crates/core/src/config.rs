//! Run configuration and assembly of the runtime objects it describes.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Provider credentials are never stored here, only the name of the
//! environment variable that holds them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::debate::DebateContext;
use crate::error::{Error, Result};
use crate::eval::ScoreMode;
use crate::kb::{ingest_collection, CategoryMap, ChunkingPolicy, IngestOptions, KnowledgeBase, OnUnreadable, Source, StoredEmbedding};
use crate::llm::{
    ChatProvider, Embedder, EmbeddingService, HashEmbedder, LlmGateway, MockProvider, MockScript, OpenAiChat,
    OpenAiEmbedder, OpenAiSettings, PromptLibrary, PromptMode, RetryPolicy, RoleProviders, Sampling,
};
use crate::pipeline::PipelineKind;
use crate::retrieval::{Bm25Params, FetcherSettings, FixtureFetcher, FusionConfig, HttpFetcher, HybridRetriever, OnlineFetcher};
use crate::safety::{HeuristicConfig, SafetyLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbConfig {
    /// Directory holding the built knowledge base.
    #[serde(default = "default_kb_root")]
    pub root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mayo_input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub webmd_input: Option<PathBuf>,
    #[serde(default)]
    pub on_unreadable: OnUnreadable,
}

fn default_kb_root() -> PathBuf {
    PathBuf::from("kb")
}

impl Default for KbConfig {
    fn default() -> Self {
        Self {
            root: default_kb_root(),
            mayo_input: None,
            webmd_input: None,
            on_unreadable: OnUnreadable::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Recorded responses; takes precedence over live fetching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<FetcherSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    Mock { script: PathBuf },
    Openai(OpenAiSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    pub default: ProviderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposer: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_a: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_b: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<ProviderConfig>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            default: ProviderConfig::Mock {
                script: PathBuf::from("mock_script.json"),
            },
            decomposer: None,
            expert_a: None,
            expert_b: None,
            judge: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Hash {
        #[serde(default = "default_hash_dimension")]
        dimension: usize,
        #[serde(default = "default_hash_seed")]
        seed: u64,
    },
    Openai(OpenAiSettings),
}

fn default_hash_dimension() -> usize {
    256
}

fn default_hash_seed() -> u64 {
    7
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hash {
            dimension: default_hash_dimension(),
            seed: default_hash_seed(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptingConfig {
    #[serde(default)]
    pub mode: PromptMode,
    /// Few-shot exemplar file, required in few-shot mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<PathBuf>,
    /// Directory of template overrides, one file per template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_pipeline")]
    pub pipeline: PipelineKind,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub score_mode: ScoreMode,
    #[serde(default)]
    pub sampling: Sampling,
}

fn default_pipeline() -> PipelineKind {
    PipelineKind::Bluemed
}

fn default_runs() -> usize {
    2
}

fn default_concurrency() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            pipeline: default_pipeline(),
            runs: default_runs(),
            concurrency: default_concurrency(),
            output_dir: default_output_dir(),
            score_mode: ScoreMode::default(),
            sampling: Sampling::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kb: KbConfig,
    #[serde(default)]
    pub chunking: ChunkingPolicy,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub online: OnlineConfig,
    #[serde(default)]
    pub providers: ProvidersConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub prompting: PromptingConfig,
    #[serde(default)]
    pub safety: SafetyConfig,
    #[serde(default)]
    pub run: RunSettings,
}

/// Command-line adjustments applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<PromptMode>,
    pub disable_online: bool,
    /// Serve every role from this mock script instead of the configured providers.
    pub mock_script: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&raw, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses and validates `raw`, resolving relative paths against `base`.
    pub fn from_toml(raw: &str, base: &Path) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        self.fusion.validate()?;
        if self.run.runs == 0 {
            return Err(Error::Config("run.runs must be >= 1".into()));
        }
        if self.run.concurrency == 0 {
            return Err(Error::Config("run.concurrency must be >= 1".into()));
        }
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return Err(Error::Config("bm25 needs k1 >= 0 and 0 <= b <= 1".into()));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.kb.root);
        self.kb.mayo_input.as_mut().map(fix);
        self.kb.webmd_input.as_mut().map(fix);
        self.online.fixture.as_mut().map(fix);
        self.prompting.exemplars.as_mut().map(fix);
        self.prompting.dir.as_mut().map(fix);
        self.safety.lexicon.as_mut().map(fix);
        fix(&mut self.run.output_dir);
        let p = &mut self.providers;
        for provider in [Some(&mut p.default), p.decomposer.as_mut(), p.expert_a.as_mut(), p.expert_b.as_mut(), p.judge.as_mut()]
            .into_iter()
            .flatten()
        {
            if let ProviderConfig::Mock { script } = provider {
                fix(script);
            }
        }
    }

    /// JSON view of the resolved config, embedded in evaluation reports.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    pub fn embedder(&self) -> Result<Arc<EmbeddingService>> {
        let inner: Arc<dyn Embedder> = match &self.embedder {
            EmbedderConfig::Hash { dimension, seed } => {
                if *dimension == 0 {
                    return Err(Error::Config("embedder.dimension must be positive".into()));
                }
                Arc::new(HashEmbedder::new(*dimension, *seed))
            }
            EmbedderConfig::Openai(settings) => Arc::new(OpenAiEmbedder::new(settings.clone())?),
        };
        Ok(Arc::new(EmbeddingService::new(inner)))
    }

    /// Ingests both source directories, embeds every chunk and writes the result.
    pub fn build_kb(&self, force: bool) -> Result<KnowledgeBase> {
        let root = &self.kb.root;
        if KnowledgeBase::exists(root) && !force {
            return Err(Error::KbExists(root.clone()));
        }
        let options = IngestOptions {
            on_unreadable: self.kb.on_unreadable,
        };
        let input = |source: Source, path: &Option<PathBuf>| -> Result<_> {
            let dir = path
                .as_ref()
                .ok_or_else(|| Error::Config(format!("kb.{}_input is not set", source.collection_name())))?;
            let report = ingest_collection(dir, source, self.chunking, &CategoryMap::from_sidecar(dir)?, options)?;
            for (file, reason) in &report.skipped {
                tracing::warn!(file = %file.display(), %reason, "skipped unreadable file");
            }
            Ok(report.collection)
        };
        let mayo = input(Source::Mayo, &self.kb.mayo_input)?;
        let webmd = input(Source::Webmd, &self.kb.webmd_input)?;
        let mut kb = KnowledgeBase::new(mayo, webmd)?;
        let embedder = self.embedder()?;
        for source in [Source::Mayo, Source::Webmd] {
            let vectors = kb
                .collection(source)
                .chunks()
                .iter()
                .map(|c| embedder.embed(&c.text))
                .collect::<Result<Vec<_>>>()?;
            let dimension = embedder.dimension().unwrap_or(0);
            kb.set_embeddings(
                source,
                StoredEmbedding {
                    model: embedder.model_id().to_string(),
                    dimension,
                    vectors,
                },
            )?;
        }
        if force && root.exists() {
            for source in [Source::Mayo, Source::Webmd] {
                let dir = root.join(source.collection_name());
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                }
            }
        }
        kb.save(root)?;
        info!(root = %root.display(), "knowledge base written");
        Ok(kb)
    }

    pub fn fetcher(&self) -> Result<Arc<dyn OnlineFetcher>> {
        Ok(match (&self.online.fixture, &self.online.http) {
            (Some(path), _) => Arc::new(FixtureFetcher::load(path)?),
            (None, settings) => Arc::new(HttpFetcher::new(settings.clone().unwrap_or_default())),
        })
    }

    pub fn retriever(&self, kb: &KnowledgeBase, online: bool) -> Result<HybridRetriever> {
        let retriever = HybridRetriever::build(kb, self.embedder()?, self.fusion, self.bm25)?;
        Ok(if online {
            retriever.with_fetcher(self.fetcher()?)
        } else {
            retriever
        })
    }

    fn provider(&self, config: &ProviderConfig) -> Result<Arc<dyn ChatProvider>> {
        Ok(match config {
            ProviderConfig::Mock { script } => Arc::new(MockProvider::new(MockScript::load(script)?)),
            ProviderConfig::Openai(settings) => Arc::new(OpenAiChat::new(settings.clone())?),
        })
    }

    pub fn gateway(&self, mock_script: Option<&Path>) -> Result<LlmGateway> {
        let p = &self.providers;
        if let Some(script) = mock_script {
            let mock: Arc<dyn ChatProvider> = Arc::new(MockProvider::new(MockScript::load(script)?));
            return Ok(LlmGateway::new(RoleProviders::uniform(mock), RetryPolicy::none()));
        }
        let default = self.provider(&p.default)?;
        let role = |c: &Option<ProviderConfig>| c.as_ref().map_or_else(|| Ok(default.clone()), |c| self.provider(c));
        let providers = RoleProviders {
            decomposer: role(&p.decomposer)?,
            expert_a: role(&p.expert_a)?,
            expert_b: role(&p.expert_b)?,
            judge: role(&p.judge)?,
        };
        Ok(LlmGateway::new(providers, p.retry))
    }

    pub fn prompts(&self, mode: PromptMode) -> Result<PromptLibrary> {
        let mut library = match &self.prompting.dir {
            Some(dir) => PromptLibrary::from_dir(dir)?,
            None => PromptLibrary::builtin(),
        };
        if let Some(path) = &self.prompting.exemplars {
            library = library.with_exemplar_file(path)?;
        }
        if mode == PromptMode::FewShot && !library.has_exemplars() {
            return Err(Error::MissingExemplars);
        }
        Ok(library)
    }

    pub fn safety_layer(&self) -> Result<SafetyLayer> {
        let config = match &self.safety.lexicon {
            Some(path) => HeuristicConfig::load(path)?,
            None => HeuristicConfig::default(),
        };
        Ok(SafetyLayer::new(config))
    }

    /// Everything a [`crate::pipeline::NoteRunner`] needs. The knowledge base is
    /// loaded only when `pipeline` retrieves.
    pub fn debate_context(&self, pipeline: PipelineKind, overrides: &Overrides) -> Result<DebateContext> {
        let mode = overrides.mode.unwrap_or(self.prompting.mode);
        let retriever = if pipeline.uses_retrieval() {
            let kb = KnowledgeBase::load(&self.kb.root)?;
            let online = self.online.enabled && !overrides.disable_online;
            Some(Arc::new(self.retriever(&kb, online)?))
        } else {
            None
        };
        Ok(DebateContext {
            gateway: Arc::new(self.gateway(overrides.mock_script.as_deref())?),
            prompts: Arc::new(self.prompts(mode)?),
            retriever,
            safety: Arc::new(self.safety_layer()?),
            mode,
            sampling: self.run.sampling,
        })
    }
}
