//! Evaluation datasets.
//!
//! Delimited files (`.csv`, `.tsv`) need a header; `.jsonl` files hold one
//! object per line. The native columns are `id,text,label,error_type`. MEDEC
//! exports (`Text ID`, `Text`, `Error Flag`, `Error Type`) load as well.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::estimate_tokens;
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    Diagnosis,
    Management,
    Treatment,
    Pharmacotherapy,
    CausalOrganism,
}

impl ErrorType {
    pub const ALL: [ErrorType; 5] = [
        ErrorType::Diagnosis,
        ErrorType::Management,
        ErrorType::Treatment,
        ErrorType::Pharmacotherapy,
        ErrorType::CausalOrganism,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Diagnosis => "Diagnosis",
            ErrorType::Management => "Management",
            ErrorType::Treatment => "Treatment",
            ErrorType::Pharmacotherapy => "Pharmacotherapy",
            ErrorType::CausalOrganism => "CausalOrganism",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        ErrorType::ALL
            .into_iter()
            .find(|t| t.as_str().to_lowercase() == key)
            .ok_or_else(|| format!("unknown error type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub note_id: String,
    pub text: String,
    pub gold_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<ErrorType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub incorrect: usize,
    pub correct: usize,
    pub by_error_type: BTreeMap<String, usize>,
    pub mean_token_estimate: f64,
}

impl DatasetStats {
    pub fn of(records: &[EvalRecord]) -> Self {
        let incorrect = records.iter().filter(|r| r.gold_label == Label::Incorrect).count();
        let mut by_error_type = BTreeMap::new();
        for t in records.iter().filter_map(|r| r.error_type) {
            *by_error_type.entry(t.to_string()).or_insert(0) += 1;
        }
        let tokens: usize = records.iter().map(|r| estimate_tokens(&r.text)).sum();
        Self {
            total: records.len(),
            incorrect,
            correct: records.len() - incorrect,
            by_error_type,
            mean_token_estimate: if records.is_empty() {
                0.0
            } else {
                tokens as f64 / records.len() as f64
            },
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} notes: {} INCORRECT, {} CORRECT; mean token estimate {:.1}",
            self.total, self.incorrect, self.correct, self.mean_token_estimate
        )?;
        for (t, n) in &self.by_error_type {
            writeln!(f, "  {t}: {n}")?;
        }
        Ok(())
    }
}

/// Header aliases for each logical column, compared after lowercasing and
/// dropping everything but letters.
const ID_COLUMNS: &[&str] = &["id", "textid", "noteid"];
const TEXT_COLUMNS: &[&str] = &["text", "note", "notetext"];
const LABEL_COLUMNS: &[&str] = &["label", "goldlabel"];
const FLAG_COLUMNS: &[&str] = &["errorflag"];
const TYPE_COLUMNS: &[&str] = &["errortype"];

fn header_key(h: &str) -> String {
    h.chars().filter(|c| c.is_ascii_alphabetic()).flat_map(|c| c.to_lowercase()).collect()
}

fn is_blank(v: &str) -> bool {
    matches!(v.trim().to_lowercase().as_str(), "" | "na" | "n/a" | "none" | "null" | "nan")
}

fn parse_label(raw: &str, flag: bool) -> std::result::Result<Label, String> {
    if flag {
        return match raw.trim() {
            "1" | "1.0" | "true" | "True" => Ok(Label::Incorrect),
            "0" | "0.0" | "false" | "False" => Ok(Label::Correct),
            other => other.parse(),
        };
    }
    raw.parse()
}

fn build_record(id: &str, text: &str, label: &str, flag: bool, error_type: Option<&str>) -> std::result::Result<EvalRecord, String> {
    if id.trim().is_empty() {
        return Err("empty id".into());
    }
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    let gold_label = parse_label(label, flag)?;
    let error_type = match error_type.filter(|v| !is_blank(v)) {
        Some(v) => Some(v.parse::<ErrorType>()?),
        None => None,
    };
    if error_type.is_some() && gold_label == Label::Correct {
        return Err("error_type is set on a CORRECT note".into());
    }
    Ok(EvalRecord {
        note_id: id.trim().to_string(),
        text: text.to_string(),
        gold_label,
        error_type,
    })
}

fn load_delimited(path: &Path, delimiter: u8) -> Result<Vec<EvalRecord>> {
    let context = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::schema(&context, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::schema(&context, e.to_string()))?
        .iter()
        .map(header_key)
        .collect();
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h.as_str()));
    let id_col = find(ID_COLUMNS).ok_or_else(|| Error::schema(&context, "no id column"))?;
    let text_col = find(TEXT_COLUMNS).ok_or_else(|| Error::schema(&context, "no text column"))?;
    let (label_col, flag) = match (find(LABEL_COLUMNS), find(FLAG_COLUMNS)) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => return Err(Error::schema(&context, "no label or error flag column")),
    };
    let type_col = find(TYPE_COLUMNS);
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let row_context = format!("{context} row {}", i + 2);
        let row = row.map_err(|e| Error::schema(&row_context, e.to_string()))?;
        let get = |c: usize| row.get(c).unwrap_or("");
        let record = build_record(get(id_col), get(text_col), get(label_col), flag, type_col.map(get))
            .map_err(|m| Error::schema(&row_context, m))?;
        records.push(record);
    }
    Ok(records)
}

fn load_jsonl(path: &Path) -> Result<Vec<EvalRecord>> {
    let context = path.display().to_string();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row_context = format!("{context} line {}", i + 1);
        let value: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| Error::schema(&row_context, e.to_string()))?;
        let field = |names: &[&str]| {
            value.iter().find(|(k, _)| names.contains(&header_key(k).as_str())).map(|(_, v)| match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Null => String::new(),
                other => other.to_string(),
            })
        };
        let (label, flag) = match (field(LABEL_COLUMNS), field(FLAG_COLUMNS)) {
            (Some(l), _) => (l, false),
            (None, Some(f)) => (f, true),
            (None, None) => return Err(Error::schema(&row_context, "no label or error flag")),
        };
        let record = build_record(
            &field(ID_COLUMNS).unwrap_or_default(),
            &field(TEXT_COLUMNS).unwrap_or_default(),
            &label,
            flag,
            field(TYPE_COLUMNS).as_deref(),
        )
        .map_err(|m| Error::schema(&row_context, m))?;
        records.push(record);
    }
    Ok(records)
}

/// Loads and validates a dataset. Duplicate note ids are rejected.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found")));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let records = match ext.as_str() {
        "jsonl" => load_jsonl(path)?,
        "tsv" => load_delimited(path, b'\t')?,
        _ => load_delimited(path, b',')?,
    };
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.note_id.as_str()) {
            return Err(Error::DuplicateRecord(r.note_id.clone()));
        }
    }
    Ok(records)
}
