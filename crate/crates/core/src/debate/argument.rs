//! Parsing expert output into a structured argument.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{strip_quotes, word_count, PhraseMatcher};
use crate::{Expert, Label};

/// Prompted length cap. Longer arguments are kept and flagged.
pub const MAX_ARGUMENT_WORDS: usize = 300;

static CONCLUSION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)based\s+on\s+my\s+analysis,?\s+(?:this|the)\s+(?:clinical\s+|medical\s+)?note\s+is\s+[*_\x22']*\s*(INCORRECT|CORRECT)\b",
    )
    .unwrap()
});
static LABEL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s>*_#-]*(?:label|classification|final\s+answer)[*_]*\s*:\s*[*_\x22']*\s*(INCORRECT|CORRECT)\b")
        .unwrap()
});
static WRONG_TERM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s>*_#-]*wrong\s+term[*_]*\s*:[*_]*\s*(.*?)\s*$").unwrap());
static CORRECT_TERM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s>*_#-]*correct(?:ed)?\s+term[*_]*\s*:[*_]*\s*(.*?)\s*$").unwrap());
static IMPACT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s>*_#-]*(?:clinical\s+)?(?:impact|explanation)[*_]*\s*:[*_]*\s*(.*?)\s*$").unwrap()
});
static CONFIDENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)confidence(?:\s+(?:score|level))?[*_]*\s*(?:[:=]|is|of)?\s*[*_]*\s*(\d+(?:\.\d+)?)\s*(%|/\s*\d+(?:\.\d+)?|out\s+of\s+\d+(?:\.\d+)?)?",
    )
    .unwrap()
});
static DENOMINATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)\s*$").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertArgument {
    pub expert: Expert,
    pub round: u8,
    pub raw_text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong_term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_term: Option<String>,
    pub impact: String,
    /// On a 0-10 scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub uncertainty_phrase_count: usize,
    pub word_count: usize,
    /// False when the label could not be read and the conservative default was used.
    pub label_parsed: bool,
}

impl ExpertArgument {
    pub fn exceeds_word_limit(&self) -> bool {
        self.word_count > MAX_ARGUMENT_WORDS
    }

    /// Conservative stand-in for an argument whose label could not be read.
    pub fn unparsed(raw: &str, expert: Expert, round: u8, uncertainty: &PhraseMatcher) -> Self {
        Self {
            expert,
            round,
            raw_text: raw.to_string(),
            label: Label::Correct,
            wrong_term: None,
            correct_term: None,
            impact: String::new(),
            confidence: None,
            uncertainty_phrase_count: uncertainty.count(raw),
            word_count: word_count(raw),
            label_parsed: false,
        }
    }
}

fn term_field(re: &Regex, raw: &str) -> Option<String> {
    let value = strip_quotes(re.captures_iter(raw).last()?.get(1)?.as_str());
    let lowered = value.to_lowercase();
    let absent = value.is_empty()
        || matches!(
            lowered.as_str(),
            "none" | "n/a" | "na" | "-" | "null" | "not applicable" | "none identified" | "no error"
        );
    (!absent).then_some(value)
}

fn parse_label(raw: &str) -> Option<Label> {
    let last = |re: &Regex| {
        re.captures_iter(raw)
            .last()
            .and_then(|c| c[1].to_uppercase().parse::<Label>().ok())
    };
    last(&CONCLUSION).or_else(|| last(&LABEL_LINE))
}

/// Confidence normalized to a 0-10 scale. `7/10`, `70%`, `3 out of 5` and a
/// bare `8` are all understood; values that land outside 0-10 are dropped.
fn parse_confidence(raw: &str) -> Option<f64> {
    let c = CONFIDENCE.captures_iter(raw).last()?;
    let value: f64 = c[1].parse().ok()?;
    let scaled = match c.get(2).map(|m| m.as_str()) {
        Some("%") => value / 10.0,
        Some(d) => {
            let denom: f64 = DENOMINATOR.captures(d)?[1].parse().ok()?;
            if denom <= 0.0 {
                return None;
            }
            value * 10.0 / denom
        }
        None if value > 10.0 && value <= 100.0 => value / 10.0,
        None => value,
    };
    (0.0..=10.0).contains(&scaled).then_some(scaled)
}

pub fn parse_expert_argument(
    raw: &str,
    expert: Expert,
    round: u8,
    uncertainty: &PhraseMatcher,
) -> Result<ExpertArgument> {
    let label = parse_label(raw).ok_or(Error::LabelUnparseable)?;
    Ok(ExpertArgument {
        expert,
        round,
        raw_text: raw.to_string(),
        label,
        wrong_term: term_field(&WRONG_TERM, raw),
        correct_term: term_field(&CORRECT_TERM, raw),
        impact: IMPACT
            .captures_iter(raw)
            .last()
            .map(|c| c[1].trim().to_string())
            .unwrap_or_default(),
        confidence: parse_confidence(raw),
        uncertainty_phrase_count: uncertainty.count(raw),
        word_count: word_count(raw),
        label_parsed: true,
    })
}
