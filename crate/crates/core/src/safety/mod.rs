//! Post-hoc rule cascade over the judge's verdict.
//!
//! Order of evaluation:
//!
//! 1. With the label INCORRECT and no expert term pair, the five domain rules
//!    are tried in order (lab confirmation, process gap, side effect,
//!    hierarchical variant, aggregate uncertainty). The first that matches
//!    flips the label to CORRECT. If none matches, the two-term rule does.
//! 2. Both experts INCORRECT with valid term pairs forces INCORRECT and ends
//!    the cascade.
//! 3. With the label INCORRECT and no confidence from either expert, the
//!    confidence filter flips it to CORRECT.

mod lexicon;

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::debate::{ExpertArgument, JudgeVerdict};
use crate::text::{normalize_term, strip_quotes, PhraseMatcher};
use crate::Label;

pub use lexicon::HeuristicConfig;

static SHOULD_BE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"["\u{201C}']([^"\u{201D}'\n]{1,80})["\u{201D}']\s+should\s+(?:have\s+been|be)\s+["\u{201C}']([^"\u{201D}'\n]{1,80})["\u{201D}']"#)
        .unwrap()
});
static ARROW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*(?:→|->)\s*").unwrap());
const MAX_INLINE_TERM_WORDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermPair {
    pub wrong: String,
    pub correct: String,
}

impl TermPair {
    /// Both terms non-empty and distinct after normalization.
    pub fn new(wrong: &str, correct: &str) -> Option<Self> {
        let wrong = normalize_term(&strip_quotes(wrong));
        let correct = normalize_term(&strip_quotes(correct));
        (!wrong.is_empty() && !correct.is_empty() && wrong != correct).then_some(Self { wrong, correct })
    }
}

fn inline_term(text: &str) -> Option<&str> {
    let t = text.trim();
    (!t.is_empty() && t.split_whitespace().count() <= MAX_INLINE_TERM_WORDS).then_some(t)
}

fn arrow_pair(line: &str) -> Option<TermPair> {
    let m = ARROW.find(line)?;
    let left = line[..m.start()].rsplit(':').next()?;
    let right = line[m.end()..].split(['.', ';', ',', '(']).next()?;
    TermPair::new(inline_term(left)?, inline_term(right)?)
}

/// The expert's term pair from the labeled fields or, failing that, from an
/// inline `"X" should be "Y"` or `X → Y` phrasing.
pub fn extract_term_pair(argument: &ExpertArgument) -> Option<TermPair> {
    if let (Some(w), Some(c)) = (&argument.wrong_term, &argument.correct_term) {
        if let Some(pair) = TermPair::new(w, c) {
            return Some(pair);
        }
    }
    let raw = &argument.raw_text;
    SHOULD_BE
        .captures_iter(raw)
        .find_map(|c| TermPair::new(&c[1], &c[2]))
        .or_else(|| raw.lines().find_map(arrow_pair))
}

pub fn count_uncertainty(text: &str, lexicon: &PhraseMatcher) -> usize {
    lexicon.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    TwoTerm,
    ConsensusOverride,
    LabConfirmation,
    ProcessGap,
    SideEffect,
    HierarchicalVariant,
    AggregateUncertainty,
    ConfidenceFilter,
}

impl RuleId {
    pub const DOMAIN: [RuleId; 5] = [
        RuleId::LabConfirmation,
        RuleId::ProcessGap,
        RuleId::SideEffect,
        RuleId::HierarchicalVariant,
        RuleId::AggregateUncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::TwoTerm => "two_term",
            RuleId::ConsensusOverride => "consensus_override",
            RuleId::LabConfirmation => "lab_confirmation",
            RuleId::ProcessGap => "process_gap",
            RuleId::SideEffect => "side_effect",
            RuleId::HierarchicalVariant => "hierarchical_variant",
            RuleId::AggregateUncertainty => "aggregate_uncertainty",
            RuleId::ConfidenceFilter => "confidence_filter",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredRule {
    pub rule: RuleId,
    /// Matched phrases or a short description of what triggered the rule.
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub rule: RuleId,
    pub from: Label,
    pub to: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyAudit {
    pub input_label: Label,
    pub fired_rules: Vec<FiredRule>,
    pub override_chain: Vec<Override>,
    pub final_label: Label,
    pub lexicon_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_pair_a: Option<TermPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_pair_b: Option<TermPair>,
}

impl SafetyAudit {
    /// Re-applies the override chain to the input label. A step whose
    /// `from` does not match the running label is not applied.
    pub fn replay(&self) -> Label {
        self.override_chain
            .iter()
            .fold(self.input_label, |current, o| if o.from == current { o.to } else { current })
    }

    /// True when the chain is connected: each step starts from the previous result.
    pub fn chain_is_consistent(&self) -> bool {
        let mut current = self.input_label;
        for o in &self.override_chain {
            if o.from != current {
                return false;
            }
            current = o.to;
        }
        current == self.final_label
    }

    pub fn overridden(&self) -> bool {
        self.input_label != self.final_label
    }
}

/// Compiled form of a [`HeuristicConfig`].
#[derive(Debug, Clone)]
pub struct SafetyLayer {
    config: HeuristicConfig,
    uncertainty: PhraseMatcher,
    process_gap: PhraseMatcher,
    lab: PhraseMatcher,
    side_effect: PhraseMatcher,
    hierarchy: PhraseMatcher,
}

impl Default for SafetyLayer {
    fn default() -> Self {
        Self::new(HeuristicConfig::default())
    }
}

struct Cascade {
    label: Label,
    fired: Vec<FiredRule>,
    chain: Vec<Override>,
}

impl Cascade {
    fn fire(&mut self, rule: RuleId, to: Label, evidence: Vec<String>) {
        self.fired.push(FiredRule { rule, evidence });
        if self.label != to {
            self.chain.push(Override {
                rule,
                from: self.label,
                to,
            });
            self.label = to;
        }
    }
}

impl SafetyLayer {
    pub fn new(config: HeuristicConfig) -> Self {
        Self {
            uncertainty: PhraseMatcher::new(&config.uncertainty_lexicon),
            process_gap: PhraseMatcher::new(&config.process_gap_indicators),
            lab: PhraseMatcher::new(&config.lab_confirmation_patterns),
            side_effect: PhraseMatcher::new(&config.side_effect_patterns),
            hierarchy: PhraseMatcher::new(&config.hierarchy_markers),
            config,
        }
    }

    pub fn config(&self) -> &HeuristicConfig {
        &self.config
    }

    pub fn uncertainty_matcher(&self) -> &PhraseMatcher {
        &self.uncertainty
    }

    pub fn count_uncertainty(&self, text: &str) -> usize {
        count_uncertainty(text, &self.uncertainty)
    }

    fn domain_rule(&self, rule: RuleId, a: &ExpertArgument, b: &ExpertArgument, note: &str) -> Option<Vec<String>> {
        let in_args = |m: &PhraseMatcher| -> Vec<String> {
            m.matches(&a.raw_text)
                .into_iter()
                .chain(m.matches(&b.raw_text))
                .map(str::to_string)
                .collect()
        };
        let nonempty = |v: Vec<String>| (!v.is_empty()).then_some(v);
        match rule {
            RuleId::LabConfirmation => nonempty(self.lab.matches(note).into_iter().map(str::to_string).collect()),
            RuleId::ProcessGap => {
                let hits = in_args(&self.process_gap);
                (hits.len() >= self.config.min_process_gap_indicators).then_some(hits)
            }
            RuleId::SideEffect => nonempty(in_args(&self.side_effect)),
            RuleId::HierarchicalVariant => nonempty(in_args(&self.hierarchy)),
            RuleId::AggregateUncertainty => {
                let total = a.uncertainty_phrase_count + b.uncertainty_phrase_count;
                (total >= self.config.uncertainty_threshold).then(|| {
                    vec![format!(
                        "{} + {} uncertainty phrases (threshold {})",
                        a.uncertainty_phrase_count, b.uncertainty_phrase_count, self.config.uncertainty_threshold
                    )]
                })
            }
            _ => None,
        }
    }

    /// Runs the cascade over the judge's answer and each expert's latest argument.
    pub fn apply(&self, verdict: &JudgeVerdict, a: &ExpertArgument, b: &ExpertArgument, note: &str) -> SafetyAudit {
        let pair_a = extract_term_pair(a);
        let pair_b = extract_term_pair(b);
        let mut c = Cascade {
            label: verdict.answer,
            fired: Vec::new(),
            chain: Vec::new(),
        };

        if c.label == Label::Incorrect && pair_a.is_none() && pair_b.is_none() {
            let domain = RuleId::DOMAIN
                .iter()
                .find_map(|&rule| self.domain_rule(rule, a, b, note).map(|ev| (rule, ev)));
            match domain {
                Some((rule, evidence)) => c.fire(rule, Label::Correct, evidence),
                None => c.fire(
                    RuleId::TwoTerm,
                    Label::Correct,
                    vec!["no expert supplied both a wrong term and a correction".into()],
                ),
            }
        }

        let consensus = a.label == Label::Incorrect && b.label == Label::Incorrect;
        if let (true, Some(pa), Some(pb)) = (consensus, &pair_a, &pair_b) {
            c.fire(
                RuleId::ConsensusOverride,
                Label::Incorrect,
                vec![
                    format!("A: {} -> {}", pa.wrong, pa.correct),
                    format!("B: {} -> {}", pb.wrong, pb.correct),
                ],
            );
        } else if c.label == Label::Incorrect && a.confidence.is_none() && b.confidence.is_none() {
            c.fire(
                RuleId::ConfidenceFilter,
                Label::Correct,
                vec!["neither expert stated a confidence score".into()],
            );
        }

        SafetyAudit {
            input_label: verdict.answer,
            fired_rules: c.fired,
            override_chain: c.chain,
            final_label: c.label,
            lexicon_version: self.config.version.clone(),
            term_pair_a: pair_a,
            term_pair_b: pair_b,
        }
    }
}

/// Free-function form of [`SafetyLayer::apply`].
pub fn apply_safety(
    verdict: &JudgeVerdict,
    a: &ExpertArgument,
    b: &ExpertArgument,
    note: &str,
    layer: &SafetyLayer,
) -> (Label, SafetyAudit) {
    let audit = layer.apply(verdict, a, b, note);
    (audit.final_label, audit)
}
