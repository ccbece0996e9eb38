mod common;

use std::sync::Arc;

use bluemed::config::Overrides;
use bluemed::debate::{
    check_consensus, parse_expert_argument, parse_judge_verdict, run_debate, run_round2, DebateContext, JudgeVerdict,
};
use bluemed::kb::Source;
use bluemed::llm::{LlmGateway, MockProvider, MockRule, PromptLibrary, PromptMode, RetryPolicy, RoleProviders, Sampling, Stage};
use bluemed::pipeline::PipelineKind;
use bluemed::safety::{extract_term_pair, TermPair};
use bluemed::text::normalize_whitespace;
use bluemed::{Expert, Label};
use common::{argument, props};
use proptest::prelude::*;

const NOTE: &str = "A 61-year-old woman with new atrial fibrillation is started on apixaban.";

fn rule(stage: Stage, response: &str) -> MockRule {
    MockRule {
        stage,
        digest: None,
        contains: vec![],
        response: response.into(),
    }
}

/// A retrieval-free context whose mock answers each stage with a fixed text.
fn scripted_context(rules: Vec<MockRule>) -> DebateContext {
    let provider = Arc::new(MockProvider::from_rules(rules));
    DebateContext {
        gateway: Arc::new(LlmGateway::new(RoleProviders::uniform(provider), RetryPolicy::none())),
        prompts: Arc::new(PromptLibrary::builtin()),
        retriever: None,
        safety: common::LAYER.clone(),
        mode: PromptMode::ZeroShot,
        sampling: Sampling::default(),
    }
}

fn expert_text(label: Label, wrong: Option<&str>, correct: Option<&str>) -> String {
    format!(
        "Wrong Term: {}\nCorrect Term: {}\nImpact: scripted.\nConfidence Score: 7\nBased on my analysis, this note is {label}",
        wrong.unwrap_or("None"),
        correct.unwrap_or("None"),
    )
}

const JUDGE_OK: &str = r#"{"Final Answer": "CORRECT", "Confidence Score": 6, "Winner": "Agent A", "Reasoning": "scripted"}"#;

#[test]
fn consensus_truth_table() {
    let cases = props::consensus_truth_table();
    assert_eq!(cases.len(), 12);
    for (name, a, b, expected) in cases {
        let got = check_consensus(&a, &b);
        assert_eq!(got.reached, expected, "{name}: {}", got.reason);
        assert_eq!(check_consensus(&b, &a).reached, expected, "{name} swapped");
    }
}

#[test]
fn mismatched_wrong_term_blocks_consensus() {
    let a = argument(Expert::A, Label::Incorrect, Some("atrial fibrillation"), Some("x"), None, "");
    let b = argument(Expert::B, Label::Incorrect, Some("atrial flutter"), Some("x"), None, "");
    assert!(!check_consensus(&a, &b).reached);
}

#[test]
fn parses_labeled_exemplar_fields() {
    let raw = "Label: INCORRECT\nWrong Term: Neisseria gonorrhoeae\nCorrect Term: Trichomonas vaginalis\n\
               Explanation: disulfiram-like reaction after alcohol.";
    let arg = parse_expert_argument(raw, Expert::A, 1, common::LAYER.uncertainty_matcher()).unwrap();
    assert_eq!(arg.label, Label::Incorrect);
    assert_eq!(
        extract_term_pair(&arg),
        TermPair::new("Neisseria gonorrhoeae", "Trichomonas vaginalis")
    );
    assert!(arg.impact.contains("disulfiram"));
}

#[test]
fn term_pair_conventions() {
    let curly = argument(Expert::A, Label::Incorrect, None, None, None, "\u{201C}metformin\u{201D} should be \u{201C}methotrexate\u{201D}.");
    assert_eq!(extract_term_pair(&curly), TermPair::new("metformin", "methotrexate"));
    let arrow = argument(Expert::A, Label::Incorrect, None, None, None, "Drug: glipizide → metformin.");
    assert_eq!(extract_term_pair(&arrow), TermPair::new("glipizide", "metformin"));
    let only_wrong = argument(Expert::A, Label::Incorrect, Some("Neisseria gonorrhoeae"), None, None, "");
    assert_eq!(extract_term_pair(&only_wrong), None);
    let same = argument(Expert::A, Label::Incorrect, Some("Metformin"), Some("metformin"), None, "");
    assert_eq!(extract_term_pair(&same), None);
    let quoted = argument(Expert::A, Label::Incorrect, Some("\"Neisseria gonorrhoeae\""), Some("*Trichomonas vaginalis*"), None, "");
    assert_eq!(extract_term_pair(&quoted), TermPair::new("neisseria gonorrhoeae", "trichomonas vaginalis"));
}

#[test]
fn judge_output_is_clamped_and_canonicalised() {
    let parsed = parse_judge_verdict(
        "Verdict follows.\n{\"Final Answer\": \"INCORRECT\", \"Confidence Score\": 15, \"Winner\": \"Expert B\", \"Reasoning\": \"r\"}",
    )
    .unwrap();
    assert_eq!(parsed.verdict.confidence, 10);
    assert_eq!(parsed.verdict.winner, Expert::B);
    assert_eq!(parsed.warnings.len(), 1);
    assert!(parse_judge_verdict("{\"Final Answer\": \"INCORRECT\"}").is_none());
    assert!(parse_judge_verdict("The note is fine.").is_none());
}

#[test]
fn malformed_judge_output_uses_fallback() {
    let ctx = scripted_context(vec![
        rule(Stage::ExpertAR1, &expert_text(Label::Correct, None, None)),
        rule(Stage::ExpertBR1, &expert_text(Label::Correct, None, None)),
        rule(Stage::Judge, "I agree with both agents."),
    ]);
    let state = run_debate(&ctx, "n1", NOTE, None).unwrap();
    assert_eq!(state.verdict, Some(JudgeVerdict::fallback()));
    assert!(state.warnings.iter().any(|w| w.contains("fallback")));
}

#[test]
fn unparseable_expert_defaults_to_correct_with_warning() {
    let ctx = scripted_context(vec![
        rule(Stage::ExpertAR1, "I would need more information."),
        rule(Stage::ExpertBR1, &expert_text(Label::Correct, None, None)),
        rule(Stage::Judge, JUDGE_OK),
    ]);
    let state = run_debate(&ctx, "n1", NOTE, None).unwrap();
    let r1 = state.round1.as_ref().unwrap();
    assert_eq!(r1.a.label, Label::Correct);
    assert!(!r1.a.label_parsed);
    assert!(state.round2.is_none());
    assert!(state.warnings.iter().any(|w| w.contains("expert A round 1")));
}

#[test]
fn judge_never_sees_the_note() {
    let ws = common::Workspace::new();
    let (runner, recorder) = ws.recording_runner(PipelineKind::Bluemed);
    let records = common::fixture_records();
    for r in &records {
        let t = runner.run(&r.note_id, &r.text).unwrap();
        let judge_input = t.debate.as_ref().unwrap().judge_input.as_deref().unwrap();
        assert!(!normalize_whitespace(judge_input).contains(&normalize_whitespace(&r.text)), "{}", r.note_id);
    }
    let judge_requests: Vec<_> = recorder.taken().into_iter().filter(|q| q.stage == Stage::Judge).collect();
    assert_eq!(judge_requests.len(), records.len());
    for q in judge_requests {
        for r in &records {
            let note = normalize_whitespace(&r.text);
            assert!(!normalize_whitespace(&q.user_content).contains(&note));
            assert!(!normalize_whitespace(&q.system_prompt).contains(&note));
        }
    }
}

#[test]
fn expert_prompts_carry_only_their_own_source() {
    let ws = common::Workspace::new();
    let (runner, recorder) = ws.recording_runner(PipelineKind::Bluemed);
    for r in common::fixture_records() {
        runner.run(&r.note_id, &r.text).unwrap();
    }
    let evidence_id = regex::Regex::new(r"(?m)^\[\d+\] (\S+) \(").unwrap();
    let mut checked = 0;
    for q in recorder.taken() {
        let own = match q.stage {
            Stage::ExpertAR1 | Stage::ExpertAR2 => Source::Mayo,
            Stage::ExpertBR1 | Stage::ExpertBR2 => Source::Webmd,
            _ => continue,
        };
        let other = if own == Source::Mayo { Source::Webmd } else { Source::Mayo };
        for id in evidence_id.captures_iter(&q.user_content).map(|c| c[1].to_string()) {
            let ok = id.starts_with(&format!("{}:", own.collection_name()))
                || id.starts_with(&format!("online:{}:", own.collection_name()));
            assert!(ok, "{} prompt carries {id}", q.stage);
            assert!(!id.contains(&format!("{}:", other.collection_name())));
            checked += 1;
        }
    }
    assert!(checked > 20, "only {checked} evidence ids seen");
}

#[test]
fn round_two_reuses_evidence_and_only_appends() {
    let ws = common::Workspace::new();
    let ctx = ws.config.debate_context(PipelineKind::Bluemed, &Overrides::default()).unwrap();
    let record = common::fixture_records().into_iter().find(|r| r.note_id == "fx-03").unwrap();
    let full = run_debate(&ctx, &record.note_id, &record.text, None).unwrap();
    assert!(full.round2.is_some());

    let mut partial = full.clone();
    partial.round2 = None;
    partial.cross_evidence.clear();
    partial.judge_input = None;
    partial.verdict = None;
    let before = partial.clone();
    let counters = ctx.retriever.as_ref().unwrap().counters();
    run_round2(&ctx, &mut partial, None).unwrap();
    assert_eq!(ctx.retriever.as_ref().unwrap().counters(), counters, "round 2 issued retrieval");
    assert_eq!(partial.round2, full.round2);
    assert_eq!(partial.round1, before.round1);
    assert_eq!(partial.evidence_a, before.evidence_a);
    assert_eq!(partial.evidence_b, before.evidence_b);
    assert_eq!(partial.sub_queries, before.sub_queries);
}

#[test]
fn round_two_refused_after_consensus() {
    let ctx = scripted_context(vec![
        rule(Stage::ExpertAR1, &expert_text(Label::Correct, None, None)),
        rule(Stage::ExpertBR1, &expert_text(Label::Correct, None, None)),
        rule(Stage::Judge, JUDGE_OK),
    ]);
    let mut state = run_debate(&ctx, "n1", NOTE, None).unwrap();
    assert!(run_round2(&ctx, &mut state, None).is_err());
}

fn scripted_side() -> impl Strategy<Value = (Label, Option<&'static str>, Option<&'static str>)> {
    let t = || proptest::option::of(proptest::sample::select(vec!["apixaban", "Apixaban", "warfarin", "rivaroxaban"]));
    (prop_oneof![Just(Label::Correct), Just(Label::Incorrect)], t(), t())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn consensus_is_symmetric(pair in props::consensus_pair()) {
        props::consensus_symmetric(pair)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn round_two_runs_iff_consensus_fails(a in scripted_side(), b in scripted_side(), r2 in scripted_side()) {
        let ctx = scripted_context(vec![
            rule(Stage::ExpertAR1, &expert_text(a.0, a.1, a.2)),
            rule(Stage::ExpertBR1, &expert_text(b.0, b.1, b.2)),
            rule(Stage::ExpertAR2, &expert_text(r2.0, r2.1, r2.2)),
            rule(Stage::ExpertBR2, &expert_text(r2.0, r2.2, r2.1)),
            rule(Stage::Judge, JUDGE_OK),
        ]);
        let ledger = bluemed::llm::UsageLedger::default();
        let state = run_debate(&ctx, "n1", NOTE, Some(&ledger)).unwrap();
        let r1 = state.round1.as_ref().unwrap();
        let reached = check_consensus(&r1.a, &r1.b).reached;
        prop_assert_eq!(state.consensus.as_ref().unwrap().reached, reached);
        prop_assert_eq!(state.round2.is_some(), !reached);
        let usage = ledger.snapshot();
        prop_assert_eq!(usage.calls(Stage::Judge), 1);
        prop_assert_eq!(usage.calls(Stage::ExpertAR2) + usage.calls(Stage::ExpertBR2), if reached { 0 } else { 2 });
        prop_assert!(state.verdict.is_some());
    }
}
