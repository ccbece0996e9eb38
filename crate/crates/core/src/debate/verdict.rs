//! The judge's structured verdict.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Expert, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub answer: Label,
    /// Always within 1..=10.
    pub confidence: u8,
    pub winner: Expert,
    pub reasoning: String,
}

impl JudgeVerdict {
    /// Used when the judge output cannot be read.
    pub fn fallback() -> Self {
        Self {
            answer: Label::Correct,
            confidence: 1,
            winner: Expert::A,
            reasoning: "parse failure".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedVerdict {
    pub verdict: JudgeVerdict,
    pub warnings: Vec<String>,
}

fn key(k: &str) -> String {
    k.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn json_object(raw: &str) -> Option<Map<String, Value>> {
    // Prefer the widest brace span; fall back to every `{` start for outputs
    // that carry stray braces in surrounding prose.
    let end = raw.rfind('}')?;
    raw.match_indices('{')
        .map(|(i, _)| i)
        .filter(|&i| i < end)
        .find_map(|start| match serde_json::from_str::<Value>(&raw[start..=end]) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        })
}

fn parse_label(v: &Value) -> Option<Label> {
    let s = v.as_str()?.to_uppercase();
    if s.contains("INCORRECT") {
        Some(Label::Incorrect)
    } else if s.contains("CORRECT") {
        Some(Label::Correct)
    } else {
        None
    }
}

fn parse_winner(v: &Value) -> Option<Expert> {
    let s = v.as_str()?.trim().to_uppercase();
    let tail = s
        .trim_start_matches("AGENT")
        .trim_start_matches("EXPERT")
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric());
    match tail {
        "A" => Some(Expert::A),
        "B" => Some(Expert::B),
        _ => None,
    }
}

fn parse_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().split('/').next()?.trim().parse().ok(),
        _ => None,
    }
}

/// Reads the four-key JSON verdict. Returns `None` when any key is missing or
/// unreadable; out-of-range confidence is clamped with a warning.
pub fn parse_judge_verdict(raw: &str) -> Option<ParsedVerdict> {
    let object = json_object(raw)?;
    let field = |name: &str| object.iter().find(|(k, _)| key(k) == name).map(|(_, v)| v);
    let answer = parse_label(field("finalanswer")?)?;
    let confidence = parse_number(field("confidencescore")?)?;
    let winner = parse_winner(field("winner")?)?;
    let reasoning = field("reasoning")?.as_str()?.to_string();
    let mut warnings = Vec::new();
    if !confidence.is_finite() {
        return None;
    }
    let rounded = confidence.round();
    let clamped = rounded.clamp(1.0, 10.0);
    if clamped != confidence {
        warnings.push(format!("judge confidence {confidence} adjusted to {clamped}"));
    }
    Some(ParsedVerdict {
        verdict: JudgeVerdict {
            answer,
            confidence: clamped as u8,
            winner,
            reasoning,
        },
        warnings,
    })
}
