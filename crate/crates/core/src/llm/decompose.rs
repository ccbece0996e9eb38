//! Splits a note into focused retrieval sub-queries.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ChatRequest, LlmGateway, PromptLibrary, Sampling, PromptMode, Stage, TemplateId, UsageLedger};
use crate::retrieval::SubQuery;
use crate::text::normalize_whitespace;

pub const MIN_SUB_QUERIES: usize = 3;
pub const MAX_SUB_QUERIES: usize = 5;

// "1. x", "2) x", "- x", "* x", "• x"
static LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d{1,2}\s*[.)]|[-*•])\s+(.+?)\s*$").unwrap());
static ASPECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Za-z][A-Za-z /_-]{0,40}):\s*(.+)$").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub sub_queries: Vec<SubQuery>,
    pub warnings: Vec<String>,
}

fn parse_item(item: &str) -> Option<SubQuery> {
    let item = item.trim().trim_matches('"').trim();
    let (aspect, text) = match ASPECT.captures(item) {
        Some(c) => (c[1].trim().to_lowercase(), c[2].trim().to_string()),
        None => ("general".to_string(), item.to_string()),
    };
    let text = text.trim_matches(|c| c == '"' || c == '*').trim().to_string();
    (!text.is_empty()).then_some(SubQuery { text, aspect })
}

/// Parses list-formatted model output and clamps it to 3..=5 entries.
pub fn parse_sub_queries(raw: &str, note: &str) -> Decomposition {
    let mut warnings = Vec::new();
    let mut queries: Vec<SubQuery> = raw
        .lines()
        .filter_map(|line| LIST_ITEM.captures(line))
        .filter_map(|c| parse_item(&c[1]))
        .collect();
    let fallback = SubQuery {
        text: normalize_whitespace(note),
        aspect: "full note".into(),
    };
    if queries.is_empty() {
        warnings.push("decomposition output had no list items; using the whole note as the only query".into());
        return Decomposition {
            sub_queries: vec![fallback],
            warnings,
        };
    }
    if queries.len() > MAX_SUB_QUERIES {
        warnings.push(format!(
            "decomposition returned {} sub-queries; kept the first {MAX_SUB_QUERIES}",
            queries.len()
        ));
        queries.truncate(MAX_SUB_QUERIES);
    } else if queries.len() < MIN_SUB_QUERIES {
        warnings.push(format!(
            "decomposition returned {} sub-queries; padded with the whole note",
            queries.len()
        ));
        while queries.len() < MIN_SUB_QUERIES {
            queries.push(fallback.clone());
        }
    }
    Decomposition {
        sub_queries: queries,
        warnings,
    }
}

pub fn decompose_note(
    gateway: &LlmGateway,
    prompts: &PromptLibrary,
    note: &str,
    sampling: Sampling,
    ledger: Option<&UsageLedger>,
) -> Result<Decomposition> {
    if note.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let system = prompts.system_prompt(TemplateId::Decompose, PromptMode::ZeroShot)?;
    let user = prompts.render(TemplateId::DecomposeUser, &[("note", note)], PromptMode::ZeroShot)?;
    let response = gateway.complete_tracked(&ChatRequest::new(Stage::Decompose, system, user).with_sampling(sampling.temperature, sampling.max_tokens), ledger)?;
    Ok(parse_sub_queries(&response.text, note))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOTE: &str = "Patient with fever and productive cough started on amoxicillin.";

    #[test]
    fn four_numbered_lines_in_order() {
        let raw = "1. Diagnosis: community acquired pneumonia\n2. Symptom: fever with productive cough\n3) Medication: amoxicillin dosing\n4. Organism: streptococcus pneumoniae";
        let d = parse_sub_queries(raw, NOTE);
        assert!(d.warnings.is_empty());
        let texts: Vec<_> = d.sub_queries.iter().map(|q| q.text.as_str()).collect();
        assert_eq!(
            texts,
            ["community acquired pneumonia", "fever with productive cough", "amoxicillin dosing", "streptococcus pneumoniae"]
        );
        assert_eq!(d.sub_queries[2].aspect, "medication");
    }

    #[test]
    fn seven_lines_are_truncated_with_warning() {
        let raw = (1..=7).map(|i| format!("{i}. query {i}")).collect::<Vec<_>>().join("\n");
        let d = parse_sub_queries(&raw, NOTE);
        assert_eq!(d.sub_queries.len(), 5);
        assert_eq!(d.sub_queries[4].text, "query 5");
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn prose_falls_back_to_the_note() {
        let d = parse_sub_queries("I think the note is about pneumonia.", NOTE);
        assert_eq!(d.sub_queries.len(), 1);
        assert_eq!(d.sub_queries[0].text, NOTE);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn short_lists_are_padded_with_the_note() {
        let d = parse_sub_queries("- pneumonia\n- amoxicillin", NOTE);
        assert_eq!(d.sub_queries.len(), 3);
        assert_eq!(d.sub_queries[2].text, NOTE);
        let d = parse_sub_queries("- pneumonia", NOTE);
        assert_eq!(d.sub_queries.len(), 3);
        assert_eq!(d.warnings.len(), 1);
    }
}
