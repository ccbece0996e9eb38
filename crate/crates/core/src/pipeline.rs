//! The full system and its baselines, run one note at a time.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::debate::{
    format_evidence, parse_expert_argument, run_debate, source_display, DebateContext, DebateState, ExpertArgument,
};
use crate::error::{Error, Result};
use crate::eval::{score_from_verdict, ScoreMode};
use crate::llm::{decompose_note, ChatRequest, LedgerSnapshot, PromptMode, Stage, TemplateId, UsageLedger};
use crate::retrieval::{ScoredChunk, SubQuery};
use crate::safety::SafetyAudit;
use crate::{Expert, Label};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PipelineKind {
    /// Retrieval, debate, judge and safety cascade.
    Bluemed,
    /// Retrieval from Mayo Clinic and a single expert call.
    RagSingleMayo,
    /// Retrieval from WebMD and a single expert call.
    RagSingleWebmd,
    /// Debate, judge and safety cascade without any retrieval.
    LlmDebate,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::Bluemed,
        PipelineKind::RagSingleMayo,
        PipelineKind::RagSingleWebmd,
        PipelineKind::LlmDebate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Bluemed => "BLUEMED",
            PipelineKind::RagSingleMayo => "RAG_SINGLE_MAYO",
            PipelineKind::RagSingleWebmd => "RAG_SINGLE_WEBMD",
            PipelineKind::LlmDebate => "LLM_DEBATE",
        }
    }

    /// Spelling used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            PipelineKind::Bluemed => "bluemed",
            PipelineKind::RagSingleMayo => "rag-single-mayo",
            PipelineKind::RagSingleWebmd => "rag-single-webmd",
            PipelineKind::LlmDebate => "llm-debate",
        }
    }

    pub fn uses_retrieval(self) -> bool {
        self != PipelineKind::LlmDebate
    }

    fn single_expert(self) -> Option<Expert> {
        match self {
            PipelineKind::RagSingleMayo => Some(Expert::A),
            PipelineKind::RagSingleWebmd => Some(Expert::B),
            _ => None,
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        PipelineKind::ALL.into_iter().find(|p| p.as_str() == wanted).ok_or_else(|| {
            let allowed: Vec<_> = PipelineKind::ALL.iter().map(|p| p.cli_name()).collect();
            format!("unknown pipeline `{s}` (allowed: {})", allowed.join(", "))
        })
    }
}

/// The single-expert baseline's record for one note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleExpertRun {
    pub expert: Expert,
    pub sub_queries: Vec<SubQuery>,
    pub evidence: Vec<ScoredChunk>,
    pub argument: ExpertArgument,
    pub warnings: Vec<String>,
}

/// Everything recorded for one note, written as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema_version: u32,
    pub note_id: String,
    pub pipeline: PipelineKind,
    pub mode: PromptMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debate: Option<DebateState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleExpertRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyAudit>,
    pub final_label: Label,
    /// Ranking score, read as the probability the note is INCORRECT.
    pub score: f64,
    pub usage: LedgerSnapshot,
}

impl Transcript {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a transcript, checking the schema version before the body.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let context = path.display().to_string();
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::schema(&context, e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::schema(&context, "missing schema_version"))?;
        if found != u64::from(TRANSCRIPT_SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                context,
                found: found as u32,
                expected: TRANSCRIPT_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::schema(context, e.to_string()))
    }

    /// Warnings from whichever stages ran.
    pub fn warnings(&self) -> &[String] {
        if let Some(d) = &self.debate {
            &d.warnings
        } else if let Some(s) = &self.single {
            &s.warnings
        } else {
            &[]
        }
    }
}

/// Runs one pipeline over single notes.
#[derive(Clone)]
pub struct NoteRunner {
    pub ctx: DebateContext,
    pub pipeline: PipelineKind,
    pub score_mode: ScoreMode,
}

impl NoteRunner {
    pub fn new(ctx: DebateContext, pipeline: PipelineKind, score_mode: ScoreMode) -> Result<Self> {
        if pipeline.uses_retrieval() && ctx.retriever.is_none() {
            return Err(Error::Config(format!("pipeline {pipeline} needs a retriever")));
        }
        let mut ctx = ctx;
        if !pipeline.uses_retrieval() {
            ctx.retriever = None;
        }
        Ok(Self {
            ctx,
            pipeline,
            score_mode,
        })
    }

    pub fn run(&self, note_id: &str, note: &str) -> Result<Transcript> {
        let ledger = UsageLedger::default();
        let mut transcript = match self.pipeline.single_expert() {
            Some(expert) => self.run_single(expert, note_id, note, &ledger)?,
            None => self.run_debate(note_id, note, &ledger)?,
        };
        transcript.usage = ledger.snapshot();
        Ok(transcript)
    }

    fn run_debate(&self, note_id: &str, note: &str, ledger: &UsageLedger) -> Result<Transcript> {
        let state = run_debate(&self.ctx, note_id, note, Some(ledger))?;
        let verdict = state.verdict.clone().expect("run_debate always adjudicates");
        let latest = state.latest().expect("run_debate always runs round 1");
        let audit = self.ctx.safety.apply(&verdict, &latest.a, &latest.b, note);
        let final_label = audit.final_label;
        let score = match self.score_mode {
            ScoreMode::Confidence => score_from_verdict(final_label, verdict.confidence),
            ScoreMode::Binary => binary_score(final_label),
        };
        Ok(Transcript {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            note_id: note_id.to_string(),
            pipeline: self.pipeline,
            mode: self.ctx.mode,
            debate: Some(state),
            single: None,
            safety: Some(audit),
            final_label,
            score,
            usage: LedgerSnapshot::default(),
        })
    }

    fn run_single(&self, expert: Expert, note_id: &str, note: &str, ledger: &UsageLedger) -> Result<Transcript> {
        let ctx = &self.ctx;
        let retriever = ctx.retriever.as_ref().expect("checked in NoteRunner::new");
        let mut warnings = Vec::new();
        let decomposition = decompose_note(&ctx.gateway, &ctx.prompts, note, ctx.sampling, Some(ledger))?;
        warnings.extend(decomposition.warnings);
        let evidence = retriever.retrieve_for_expert(&decomposition.sub_queries, expert)?;
        warnings.extend(evidence.warnings);

        let template = match expert {
            Expert::A => TemplateId::ExpertA,
            Expert::B => TemplateId::ExpertB,
        };
        let system = ctx.prompts.system_prompt(template, ctx.mode)?;
        let formatted = format_evidence(&evidence.chunks, "(no evidence was retrieved)");
        let user = ctx.prompts.render(
            TemplateId::ExpertUser,
            &[
                ("note", note),
                ("source", source_display(expert.source())),
                ("evidence", &formatted),
            ],
            ctx.mode,
        )?;
        let request = ChatRequest::new(Stage::expert(expert, 1), system, user)
            .with_sampling(ctx.sampling.temperature, ctx.sampling.max_tokens);
        let response = ctx.gateway.complete_tracked(&request, Some(ledger))?;
        let matcher = ctx.safety.uncertainty_matcher();
        let argument = parse_expert_argument(&response.text, expert, 1, matcher).unwrap_or_else(|_| {
            warnings.push(format!("expert {expert}: no CORRECT/INCORRECT label found; defaulting to CORRECT"));
            ExpertArgument::unparsed(&response.text, expert, 1, matcher)
        });
        let final_label = argument.label;
        let score = match (self.score_mode, argument.confidence) {
            (ScoreMode::Confidence, Some(c)) if (1.0..=10.0).contains(&c) => {
                let c = c / 10.0;
                if final_label == Label::Incorrect {
                    c
                } else {
                    1.0 - c
                }
            }
            _ => binary_score(final_label),
        };
        Ok(Transcript {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            note_id: note_id.to_string(),
            pipeline: self.pipeline,
            mode: ctx.mode,
            debate: None,
            single: Some(SingleExpertRun {
                expert,
                sub_queries: decomposition.sub_queries,
                evidence: evidence.chunks,
                argument,
                warnings,
            }),
            safety: None,
            final_label,
            score,
            usage: LedgerSnapshot::default(),
        })
    }
}

fn binary_score(label: Label) -> f64 {
    match label {
        Label::Incorrect => 1.0,
        Label::Correct => 0.0,
    }
}
