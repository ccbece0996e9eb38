//! Two-expert debate with a blinded judge.
//!
//! A note moves through decomposition, per-expert retrieval, Round 1, the
//! consensus check, an optional Round 2, cross-source retrieval and finally
//! adjudication. Every stage appends to [`DebateState`].

mod argument;
mod consensus;
mod verdict;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::error::{Error, Result};
use crate::kb::Source;
use crate::llm::{
    decompose_note, ChatRequest, LlmGateway, PromptLibrary, PromptMode, Sampling, Stage, TemplateId, UsageLedger,
};
use crate::retrieval::{HybridRetriever, ScoredChunk, SubQuery};
use crate::safety::SafetyLayer;
use crate::text::normalize_whitespace;
use crate::Expert;

pub use argument::{parse_expert_argument, ExpertArgument, MAX_ARGUMENT_WORDS};
pub use consensus::{check_consensus, Consensus};
pub use verdict::{parse_judge_verdict, JudgeVerdict, ParsedVerdict};

/// Replaces note text that leaks into the judge prompt.
pub const REDACTION_MARKER: &str = "[clinical note withheld from judge]";

/// Everything the debate stages need. Cheap to clone.
#[derive(Clone)]
pub struct DebateContext {
    pub gateway: Arc<LlmGateway>,
    pub prompts: Arc<PromptLibrary>,
    /// `None` runs the debate without any retrieval.
    pub retriever: Option<Arc<HybridRetriever>>,
    pub safety: Arc<SafetyLayer>,
    pub mode: PromptMode,
    pub sampling: Sampling,
}

impl DebateContext {
    fn request(&self, stage: Stage, system: String, user: String) -> ChatRequest {
        ChatRequest::new(stage, system, user).with_sampling(self.sampling.temperature, self.sampling.max_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundArguments {
    pub a: ExpertArgument,
    pub b: ExpertArgument,
}

impl RoundArguments {
    pub fn get(&self, expert: Expert) -> &ExpertArgument {
        match expert {
            Expert::A => &self.a,
            Expert::B => &self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateState {
    pub note_id: String,
    pub note: String,
    pub retrieval_enabled: bool,
    pub sub_queries: Vec<SubQuery>,
    pub evidence_a: Vec<ScoredChunk>,
    pub evidence_b: Vec<ScoredChunk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round1: Option<RoundArguments>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<Consensus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round2: Option<RoundArguments>,
    pub cross_evidence: BTreeMap<Source, Vec<ScoredChunk>>,
    /// The exact user message sent to the judge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    pub warnings: Vec<String>,
}

impl DebateState {
    pub fn new(note_id: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            note_id: note_id.into(),
            note: note.into(),
            retrieval_enabled: false,
            sub_queries: Vec::new(),
            evidence_a: Vec::new(),
            evidence_b: Vec::new(),
            round1: None,
            consensus: None,
            round2: None,
            cross_evidence: BTreeMap::new(),
            judge_input: None,
            verdict: None,
            warnings: Vec::new(),
        }
    }

    pub fn evidence(&self, expert: Expert) -> &[ScoredChunk] {
        match expert {
            Expert::A => &self.evidence_a,
            Expert::B => &self.evidence_b,
        }
    }

    /// Each expert's most recent argument (Round 2 when it ran).
    pub fn latest(&self) -> Option<&RoundArguments> {
        self.round2.as_ref().or(self.round1.as_ref())
    }

    pub fn arguments(&self) -> Vec<&ExpertArgument> {
        [&self.round1, &self.round2]
            .into_iter()
            .flatten()
            .flat_map(|r| [&r.a, &r.b])
            .collect()
    }

    fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        warn!(note = %self.note_id, "{message}");
        self.warnings.push(message);
    }
}

pub fn source_display(source: Source) -> &'static str {
    match source {
        Source::Mayo => "Mayo Clinic",
        Source::Webmd => "WebMD",
        Source::Online => "online",
    }
}

/// Numbered evidence block used in expert and judge prompts.
pub fn format_evidence(chunks: &[ScoredChunk], empty: &str) -> String {
    if chunks.is_empty() {
        return empty.to_string();
    }
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let origin = match c.chunk.fetched_for {
            Some(site) => format!("{} live page {}", source_display(site), c.chunk.origin_doc),
            None => source_display(c.chunk.source).to_string(),
        };
        let _ = write!(out, "[{}] {} ({origin})\n{}", i + 1, c.chunk.chunk_id, c.chunk.text);
    }
    out
}

fn no_evidence_text(state: &DebateState) -> &'static str {
    if state.retrieval_enabled {
        "(no evidence was retrieved)"
    } else {
        "(retrieval is disabled for this run; rely on your own clinical knowledge)"
    }
}

fn parse_or_default(ctx: &DebateContext, raw: &str, expert: Expert, round: u8) -> (ExpertArgument, Vec<String>) {
    let matcher = ctx.safety.uncertainty_matcher();
    let mut warnings = Vec::new();
    let argument = match parse_expert_argument(raw, expert, round, matcher) {
        Ok(a) => a,
        Err(_) => {
            warnings.push(format!(
                "expert {expert} round {round}: no CORRECT/INCORRECT label found; defaulting to CORRECT"
            ));
            ExpertArgument::unparsed(raw, expert, round, matcher)
        }
    };
    if argument.exceeds_word_limit() {
        warnings.push(format!(
            "expert {expert} round {round}: argument has {} words (limit {MAX_ARGUMENT_WORDS})",
            argument.word_count
        ));
    }
    (argument, warnings)
}

fn expert_template(expert: Expert) -> TemplateId {
    match expert {
        Expert::A => TemplateId::ExpertA,
        Expert::B => TemplateId::ExpertB,
    }
}

fn call_expert(
    ctx: &DebateContext,
    state: &DebateState,
    expert: Expert,
    round: u8,
    ledger: Option<&UsageLedger>,
) -> Result<(ExpertArgument, Vec<String>)> {
    let system = ctx.prompts.system_prompt(expert_template(expert), ctx.mode)?;
    let evidence = format_evidence(state.evidence(expert), no_evidence_text(state));
    let source = source_display(expert.source());
    let user = if round == 1 {
        ctx.prompts.render(
            TemplateId::ExpertUser,
            &[("note", &state.note), ("source", source), ("evidence", &evidence)],
            ctx.mode,
        )?
    } else {
        let r1 = state
            .round1
            .as_ref()
            .ok_or_else(|| Error::Config("round 2 requires round 1 arguments".into()))?;
        ctx.prompts.render(
            TemplateId::RebuttalUser,
            &[
                ("note", &state.note),
                ("source", source),
                ("evidence", &evidence),
                ("own_argument", &r1.get(expert).raw_text),
                ("opponent_argument", &r1.get(expert.other()).raw_text),
            ],
            ctx.mode,
        )?
    };
    let response = ctx
        .gateway
        .complete_tracked(&ctx.request(Stage::expert(expert, round), system, user), ledger)?;
    Ok(parse_or_default(ctx, &response.text, expert, round))
}

/// Runs both experts of one round concurrently and stores the pair once both return.
fn run_round(ctx: &DebateContext, state: &mut DebateState, round: u8, ledger: Option<&UsageLedger>) -> Result<RoundArguments> {
    let snapshot: &DebateState = state;
    let (a, b) = thread::scope(|s| {
        let a = s.spawn(|| call_expert(ctx, snapshot, Expert::A, round, ledger));
        let b = call_expert(ctx, snapshot, Expert::B, round, ledger);
        (a.join().expect("expert A worker panicked"), b)
    });
    let (a, wa) = a?;
    let (b, wb) = b?;
    for w in wa.into_iter().chain(wb) {
        state.warn(w);
    }
    Ok(RoundArguments { a, b })
}

pub fn run_round1(ctx: &DebateContext, state: &mut DebateState, ledger: Option<&UsageLedger>) -> Result<()> {
    for expert in [Expert::A, Expert::B] {
        if state.retrieval_enabled && state.evidence(expert).is_empty() {
            state.warn(format!("expert {expert} has no retrieved evidence"));
        }
    }
    let pair = run_round(ctx, state, 1, ledger)?;
    state.round1 = Some(pair);
    Ok(())
}

/// Counter-arguments. Reuses the Round 1 evidence; issues no retrieval.
pub fn run_round2(ctx: &DebateContext, state: &mut DebateState, ledger: Option<&UsageLedger>) -> Result<()> {
    match &state.consensus {
        Some(c) if !c.reached => {}
        _ => return Err(Error::Config("round 2 runs only after a failed consensus check".into())),
    }
    let pair = run_round(ctx, state, 2, ledger)?;
    state.round2 = Some(pair);
    Ok(())
}

fn claim(arg: &ExpertArgument) -> String {
    [&arg.wrong_term, &arg.correct_term]
        .into_iter()
        .flatten()
        .cloned()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Cross-source evidence for the judge, built from the note and both experts' latest claims.
pub fn gather_cross_evidence(ctx: &DebateContext, state: &mut DebateState) -> Result<()> {
    let Some(retriever) = &ctx.retriever else { return Ok(()) };
    let latest = state
        .latest()
        .ok_or_else(|| Error::Config("cross-source retrieval needs expert arguments".into()))?;
    let claims = vec![claim(&latest.a), claim(&latest.b)];
    state.cross_evidence = retriever.cross_source_retrieve(&state.note, &claims)?;
    Ok(())
}

fn debate_transcript(state: &DebateState) -> String {
    let mut out = String::new();
    for (round, pair) in [(1, &state.round1), (2, &state.round2)] {
        let Some(pair) = pair else { continue };
        for arg in [&pair.a, &pair.b] {
            if !out.is_empty() {
                out.push_str("\n\n");
            }
            let _ = write!(
                out,
                "Agent {} ({} expert), Round {round}:\n{}",
                arg.expert,
                source_display(arg.expert.source()),
                arg.raw_text.trim()
            );
        }
    }
    out
}

/// Renders the judge's user message. The note itself is never included; if an
/// expert quoted it verbatim the quote is replaced by [`REDACTION_MARKER`].
pub fn render_judge_input(prompts: &PromptLibrary, state: &DebateState) -> Result<(String, bool)> {
    let none = "(no cross-source evidence available)";
    let empty = Vec::new();
    let rendered = prompts.render(
        TemplateId::JudgeUser,
        &[
            ("transcript", &debate_transcript(state)),
            (
                "evidence_for_a",
                &format_evidence(state.cross_evidence.get(&Source::Webmd).unwrap_or(&empty), none),
            ),
            (
                "evidence_for_b",
                &format_evidence(state.cross_evidence.get(&Source::Mayo).unwrap_or(&empty), none),
            ),
        ],
        PromptMode::ZeroShot,
    )?;
    let note = normalize_whitespace(&state.note);
    if note.is_empty() || !normalize_whitespace(&rendered).contains(&note) {
        return Ok((rendered, false));
    }
    let redacted = rendered
        .split('\n')
        .map(normalize_whitespace)
        .collect::<Vec<_>>()
        .join("\n")
        .replace(&note, REDACTION_MARKER);
    if !normalize_whitespace(&redacted).contains(&note) {
        return Ok((redacted, true));
    }
    // The quote spans line breaks; fall back to a fully flattened prompt.
    Ok((normalize_whitespace(&rendered).replace(&note, REDACTION_MARKER), true))
}

/// Blinded adjudication. Unreadable output yields the conservative fallback verdict.
pub fn adjudicate(ctx: &DebateContext, state: &mut DebateState, ledger: Option<&UsageLedger>) -> Result<JudgeVerdict> {
    if state.round1.is_none() {
        return Err(Error::Config("adjudication needs at least the Round 1 arguments".into()));
    }
    let system = ctx.prompts.system_prompt(TemplateId::Judge, ctx.mode)?;
    let (user, redacted) = render_judge_input(&ctx.prompts, state)?;
    if redacted {
        state.warn("an expert argument quoted the note; the quote was withheld from the judge");
    }
    let response = ctx
        .gateway
        .complete_tracked(&ctx.request(Stage::Judge, system, user.clone()), ledger)?;
    state.judge_input = Some(user);
    let verdict = match parse_judge_verdict(&response.text) {
        Some(parsed) => {
            for w in parsed.warnings {
                state.warn(w);
            }
            parsed.verdict
        }
        None => {
            state.warn("judge output could not be parsed; using the fallback verdict (CORRECT, confidence 1)");
            JudgeVerdict::fallback()
        }
    };
    state.verdict = Some(verdict.clone());
    Ok(verdict)
}

/// The full debate for one note.
pub fn run_debate(ctx: &DebateContext, note_id: &str, note: &str, ledger: Option<&UsageLedger>) -> Result<DebateState> {
    if note.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let mut state = DebateState::new(note_id, note);
    if let Some(retriever) = &ctx.retriever {
        state.retrieval_enabled = true;
        let decomposition = decompose_note(&ctx.gateway, &ctx.prompts, note, ctx.sampling, ledger)?;
        for w in decomposition.warnings {
            state.warn(w);
        }
        state.sub_queries = decomposition.sub_queries;
        for expert in [Expert::A, Expert::B] {
            let evidence = retriever.retrieve_for_expert(&state.sub_queries, expert)?;
            for w in evidence.warnings {
                state.warn(w);
            }
            match expert {
                Expert::A => state.evidence_a = evidence.chunks,
                Expert::B => state.evidence_b = evidence.chunks,
            }
        }
    }
    run_round1(ctx, &mut state, ledger)?;
    let round1 = state.round1.as_ref().expect("round 1 just ran");
    let consensus = check_consensus(&round1.a, &round1.b);
    debug!(note = note_id, reached = consensus.reached, "consensus check");
    let skip = consensus.reached;
    state.consensus = Some(consensus);
    if !skip {
        run_round2(ctx, &mut state, ledger)?;
    }
    gather_cross_evidence(ctx, &mut state)?;
    adjudicate(ctx, &mut state, ledger)?;
    Ok(state)
}
