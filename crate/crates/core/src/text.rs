//! Small text utilities shared by chunking, retrieval, parsing and the safety rules.

use std::sync::LazyLock;

use regex::Regex;

static TOKEN_ESTIMATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]").unwrap());

/// Collapses every run of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-folded, whitespace-normalized form used for term comparison.
pub fn normalize_term(term: &str) -> String {
    normalize_whitespace(&term.to_lowercase())
}

/// Lowercased alphanumeric tokens, as indexed by the sparse retriever.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Rough token count: words plus standalone punctuation.
pub fn estimate_tokens(text: &str) -> usize {
    TOKEN_ESTIMATE.find_iter(text).count()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

const QUOTES: &[char] = &[
    '"', '\'', '`', '\u{201C}', '\u{201D}', '\u{2018}', '\u{2019}', '\u{00AB}', '\u{00BB}', '*',
    '_',
];

/// Strips surrounding quote marks (straight, curly, guillemets, backticks) and
/// markdown emphasis, then trailing sentence punctuation.
pub fn strip_quotes(text: &str) -> String {
    let mut s = text.trim();
    loop {
        let before = s;
        s = s.trim_matches(QUOTES).trim();
        s = s.trim_end_matches(['.', ',', ';', ':']).trim();
        if s == before {
            break;
        }
    }
    s.to_string()
}

/// A case-insensitive, word-bounded phrase matcher over a lexicon.
///
/// Matches are non-overlapping and scanned left to right; when two phrases
/// start at the same position the longer one wins.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    regex: Option<Regex>,
}

impl PhraseMatcher {
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Self {
        let mut cleaned: Vec<String> = phrases
            .iter()
            .map(|p| normalize_term(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        cleaned.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        cleaned.dedup();
        if cleaned.is_empty() {
            return Self { regex: None };
        }
        let alternatives: Vec<String> = cleaned
            .iter()
            .map(|p| {
                let body = p
                    .split(' ')
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+");
                let starts_word = p.chars().next().is_some_and(|c| c.is_alphanumeric());
                let ends_word = p.chars().last().is_some_and(|c| c.is_alphanumeric());
                format!(
                    "{}{}{}",
                    if starts_word { r"\b" } else { "" },
                    body,
                    if ends_word { r"\b" } else { "" }
                )
            })
            .collect();
        let pattern = format!("(?i)(?:{})", alternatives.join("|"));
        Self {
            regex: Some(Regex::new(&pattern).expect("escaped phrases always compile")),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        self.regex.as_ref().map_or(0, |r| r.find_iter(text).count())
    }

    /// Matched substrings in order of appearance.
    pub fn matches<'t>(&self, text: &'t str) -> Vec<&'t str> {
        self.regex
            .as_ref()
            .map_or_else(Vec::new, |r| r.find_iter(text).map(|m| m.as_str()).collect())
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.as_ref().is_some_and(|r| r.is_match(text))
    }
}
