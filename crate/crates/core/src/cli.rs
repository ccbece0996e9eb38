//! The `bluemed` command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when the
//! pipeline itself fails.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Overrides, RunConfig};
use crate::debate::JudgeVerdict;
use crate::error::Error;
use crate::eval::{load_dataset, run_evaluation, EvalOptions, ScoreMode};
use crate::kb::Source;
use crate::llm::PromptMode;
use crate::pipeline::{NoteRunner, PipelineKind, Transcript};
use crate::safety::Override;
use crate::Label;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bluemed", version, about = "Flag substituted medical terms in clinical notes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest the Mayo Clinic and WebMD corpora and write the knowledge base.
    BuildKb(BuildKbArgs),
    /// Classify one note and write its transcript.
    Classify(ClassifyArgs),
    /// Run a pipeline over a labelled dataset and report metrics.
    Evaluate(EvaluateArgs),
    /// Summarize a transcript written by `classify` or `evaluate`.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct BuildKbArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `kb.mayo_input`.
    #[arg(long)]
    pub mayo: Option<PathBuf>,
    /// Overrides `kb.webmd_input`.
    #[arg(long)]
    pub webmd: Option<PathBuf>,
    /// Overrides `kb.root`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing knowledge base.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub pipeline: Option<PipelineKind>,
    #[arg(long)]
    pub mode: Option<PromptMode>,
    /// Serve every model role from this mock script.
    #[arg(long, value_name = "SCRIPT")]
    pub mock: Option<PathBuf>,
    /// Disable live online retrieval.
    #[arg(long)]
    pub no_online: bool,
    /// Score with 1/0 labels instead of judge confidence.
    #[arg(long)]
    pub binary_scores: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Note file to classify.
    #[arg(required_unless_present = "text", conflicts_with = "text")]
    pub note: Option<PathBuf>,
    /// Inline note text.
    #[arg(long)]
    pub text: Option<String>,
    /// Note id used in the transcript; defaults to the file stem.
    #[arg(long)]
    pub id: Option<String>,
    /// Directory for the transcript; defaults to `run.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Report directory; defaults to `run.output_dir/<pipeline>-<mode>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub transcript: PathBuf,
    #[arg(long)]
    pub json: bool,
}

/// Failure tagged with the exit code it maps to.
struct Failure {
    code: i32,
    error: Error,
}

fn usage(error: Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error,
    }
}

fn pipeline(error: Error) -> Failure {
    Failure {
        code: EXIT_PIPELINE,
        error,
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::BuildKb(a) => build_kb(a, out),
        Command::Classify(a) => classify(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Inspect(a) => inspect(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.error);
            f.code
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .map_err(|e| pipeline(Error::io("<stdout>", e)))
}

fn to_json<T: Serialize>(value: &T) -> std::result::Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| pipeline(e.into()))?;
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct CollectionSummary {
    source: Source,
    documents: usize,
    chunks: usize,
    token_estimate: usize,
}

fn build_kb(args: BuildKbArgs, out: &mut dyn Write) -> CliResult {
    let mut config = RunConfig::load(&args.config).map_err(usage)?;
    if let Some(p) = args.mayo {
        config.kb.mayo_input = Some(p);
    }
    if let Some(p) = args.webmd {
        config.kb.webmd_input = Some(p);
    }
    if let Some(p) = args.out {
        config.kb.root = p;
    }
    let kb = config.build_kb(args.force).map_err(|e| match e {
        Error::KbExists(_) | Error::Config(_) | Error::Io { .. } | Error::InvalidPolicy(_) => usage(e),
        other => pipeline(other),
    })?;
    let summary: Vec<CollectionSummary> = [Source::Mayo, Source::Webmd]
        .into_iter()
        .map(|source| {
            let stats = kb.collection(source).stats();
            CollectionSummary {
                source,
                documents: stats.documents,
                chunks: stats.chunks,
                token_estimate: stats.token_estimate,
            }
        })
        .collect();
    if args.json {
        return emit(out, &to_json(&summary)?);
    }
    let mut text = format!("knowledge base written to {}\n", config.kb.root.display());
    for s in &summary {
        text.push_str(&format!(
            "{:<6} {} documents, {} chunks, ~{} tokens\n",
            s.source.as_str(),
            s.documents,
            s.chunks,
            s.token_estimate
        ));
    }
    emit(out, &text)
}

fn runner_for(args: &RunArgs) -> std::result::Result<(RunConfig, NoteRunner), Failure> {
    let config = RunConfig::load(&args.config).map_err(usage)?;
    let kind = args.pipeline.unwrap_or(config.run.pipeline);
    let overrides = Overrides {
        mode: args.mode,
        disable_online: args.no_online,
        mock_script: args.mock.clone(),
    };
    let ctx = config.debate_context(kind, &overrides).map_err(usage)?;
    let score_mode = if args.binary_scores {
        ScoreMode::Binary
    } else {
        config.run.score_mode
    };
    let runner = NoteRunner::new(ctx, kind, score_mode).map_err(usage)?;
    Ok((config, runner))
}

fn classify(args: ClassifyArgs, out: &mut dyn Write) -> CliResult {
    let (note, default_id) = match (&args.note, &args.text) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(Error::io(path, e)))?;
            let stem = path.file_stem().map_or("note".into(), |s| s.to_string_lossy().into_owned());
            (text, stem)
        }
        (None, Some(text)) => (text.clone(), "note".to_string()),
        (None, None) => return Err(usage(Error::Config("give a note file or --text".into()))),
    };
    let note_id = args.id.clone().unwrap_or(default_id);
    let (config, runner) = runner_for(&args.run)?;
    let transcript = runner.run(&note_id, &note).map_err(pipeline)?;
    let dir = args.out.clone().unwrap_or(config.run.output_dir);
    fs::create_dir_all(&dir).map_err(|e| pipeline(Error::io(&dir, e)))?;
    let path = dir.join(format!("{note_id}.json"));
    transcript.write(&path).map_err(pipeline)?;

    let summary = InspectSummary::of(&transcript);
    if args.json {
        return emit(out, &to_json(&summary)?);
    }
    let mut text = format!("{}\n", transcript.final_label);
    if let Some(v) = &summary.verdict {
        text.push_str(&format!(
            "judge: {} (confidence {}/10, winner {})\n",
            v.answer, v.confidence, v.winner
        ));
    }
    if summary.fired_rules.is_empty() {
        text.push_str("safety: no rules fired\n");
    } else {
        text.push_str(&format!("safety: {}\n", summary.fired_rules.join(", ")));
    }
    text.push_str(&format!("transcript: {}\n", path.display()));
    emit(out, &text)
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> CliResult {
    let records = load_dataset(&args.dataset).map_err(usage)?;
    let (config, runner) = runner_for(&args.run)?;
    let dir = args.out.clone().unwrap_or_else(|| {
        config
            .run
            .output_dir
            .join(format!("{}-{}", runner.pipeline.cli_name(), runner.ctx.mode))
    });
    let options = EvalOptions {
        runs: args.runs.unwrap_or(config.run.runs),
        concurrency: args.concurrency.unwrap_or(config.run.concurrency),
        output_dir: Some(dir.clone()),
        config_snapshot: config.snapshot(),
    };
    let report = run_evaluation(&runner, &records, &options).map_err(|e| match e {
        Error::Config(_) => usage(e),
        other => pipeline(other),
    })?;
    let failed = report.failed_total();
    if report.averaged.is_none() {
        return Err(pipeline(Error::Config(format!(
            "every note failed in every run ({failed} failures); see {}",
            dir.join("report.json").display()
        ))));
    }
    if args.json {
        return emit(out, &report.to_json().map_err(pipeline)?);
    }
    let mut text = report.table();
    if failed > 0 {
        text.push_str(&format!("{failed} note runs failed and were excluded\n"));
    }
    text.push_str(&format!("report: {}\n", dir.join("report.json").display()));
    emit(out, &text)
}

fn inspect(args: InspectArgs, out: &mut dyn Write) -> CliResult {
    let transcript = Transcript::load(&args.transcript).map_err(usage)?;
    let summary = InspectSummary::of(&transcript);
    if args.json {
        emit(out, &to_json(&summary)?)
    } else {
        emit(out, &summary.render())
    }
}

#[derive(Debug, Serialize)]
pub struct ArgumentSummary {
    pub expert: String,
    pub round: u8,
    pub label: Label,
    pub wrong_term: Option<String>,
    pub correct_term: Option<String>,
    pub confidence: Option<f64>,
}

/// Readable digest of one transcript.
#[derive(Debug, Serialize)]
pub struct InspectSummary {
    pub note_id: String,
    pub pipeline: PipelineKind,
    pub mode: PromptMode,
    pub sub_queries: Vec<String>,
    pub evidence: BTreeMap<String, Vec<String>>,
    pub arguments: Vec<ArgumentSummary>,
    pub consensus: Option<String>,
    pub judge_evidence: BTreeMap<String, Vec<String>>,
    pub verdict: Option<JudgeVerdict>,
    pub fired_rules: Vec<String>,
    pub override_chain: Vec<Override>,
    pub final_label: Label,
    pub score: f64,
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub warnings: Vec<String>,
}

impl InspectSummary {
    pub fn of(t: &Transcript) -> Self {
        let ids = |chunks: &[crate::retrieval::ScoredChunk]| chunks.iter().map(|c| c.chunk.chunk_id.clone()).collect();
        let mut evidence = BTreeMap::new();
        let mut judge_evidence = BTreeMap::new();
        let mut arguments = Vec::new();
        let mut sub_queries = Vec::new();
        let mut consensus = None;
        let mut verdict = None;
        let summarize = |a: &crate::debate::ExpertArgument| ArgumentSummary {
            expert: a.expert.to_string(),
            round: a.round,
            label: a.label,
            wrong_term: a.wrong_term.clone(),
            correct_term: a.correct_term.clone(),
            confidence: a.confidence,
        };
        if let Some(d) = &t.debate {
            sub_queries = d.sub_queries.iter().map(|q| q.text.clone()).collect();
            evidence.insert("A".to_string(), ids(&d.evidence_a));
            evidence.insert("B".to_string(), ids(&d.evidence_b));
            for (source, chunks) in &d.cross_evidence {
                judge_evidence.insert(source.to_string(), ids(chunks));
            }
            arguments = d.arguments().into_iter().map(summarize).collect();
            consensus = d.consensus.as_ref().map(|c| c.reason.clone());
            verdict = d.verdict.clone();
        }
        if let Some(s) = &t.single {
            sub_queries = s.sub_queries.iter().map(|q| q.text.clone()).collect();
            evidence.insert(s.expert.to_string(), ids(&s.evidence));
            arguments.push(summarize(&s.argument));
        }
        let (fired_rules, override_chain) = t.safety.as_ref().map_or_else(Default::default, |s| {
            (
                s.fired_rules.iter().map(|f| f.rule.as_str().to_string()).collect(),
                s.override_chain.clone(),
            )
        });
        Self {
            note_id: t.note_id.clone(),
            pipeline: t.pipeline,
            mode: t.mode,
            sub_queries,
            evidence,
            arguments,
            consensus,
            judge_evidence,
            verdict,
            fired_rules,
            override_chain,
            final_label: t.final_label,
            score: t.score,
            calls: t.usage.total_calls(),
            input_tokens: t.usage.total_input_tokens(),
            output_tokens: t.usage.total_output_tokens(),
            warnings: t.warnings().to_vec(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("note {} | {} | {}\n", self.note_id, self.pipeline, self.mode);
        for (i, q) in self.sub_queries.iter().enumerate() {
            s.push_str(&format!("  sub-query {}: {q}\n", i + 1));
        }
        for (expert, ids) in &self.evidence {
            s.push_str(&format!("evidence {expert}: {}\n", list_or_none(ids)));
        }
        for a in &self.arguments {
            s.push_str(&format!(
                "round {} expert {}: {} wrong={} correct={}",
                a.round,
                a.expert,
                a.label,
                a.wrong_term.as_deref().unwrap_or("-"),
                a.correct_term.as_deref().unwrap_or("-"),
            ));
            if let Some(c) = a.confidence {
                s.push_str(&format!(" confidence={c}"));
            }
            s.push('\n');
        }
        if let Some(c) = &self.consensus {
            s.push_str(&format!("consensus: {c}\n"));
        }
        for (source, ids) in &self.judge_evidence {
            s.push_str(&format!("judge evidence {source}: {}\n", list_or_none(ids)));
        }
        if let Some(v) = &self.verdict {
            s.push_str(&format!(
                "verdict: {} confidence {}/10, winner {}\n  {}\n",
                v.answer, v.confidence, v.winner, v.reasoning
            ));
        }
        s.push_str(&format!("fired rules: {}\n", list_or_none(&self.fired_rules)));
        for o in &self.override_chain {
            s.push_str(&format!("override {}: {} -> {}\n", o.rule.as_str(), o.from, o.to));
        }
        s.push_str(&format!("final: {} (score {:.2})\n", self.final_label, self.score));
        s.push_str(&format!(
            "usage: {} calls, {} input tokens, {} output tokens\n",
            self.calls, self.input_tokens, self.output_tokens
        ));
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

fn list_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".into()
    } else {
        items.join(", ")
    }
}
