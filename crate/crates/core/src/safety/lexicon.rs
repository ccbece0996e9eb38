//! Heuristic lexicons and thresholds, loaded from a small sectioned text file.
//!
//! ```text
//! version: default-1
//! min_process_gap_indicators: 2
//! uncertainty_threshold: 3
//!
//! [uncertainty]
//! may
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../lexicon/heuristics.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub version: String,
    pub uncertainty_lexicon: Vec<String>,
    pub process_gap_indicators: Vec<String>,
    pub lab_confirmation_patterns: Vec<String>,
    pub side_effect_patterns: Vec<String>,
    pub hierarchy_markers: Vec<String>,
    pub min_process_gap_indicators: usize,
    pub uncertainty_threshold: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON, "built-in lexicon").expect("built-in lexicon is valid")
    }
}

impl HeuristicConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, &path.display().to_string())
    }

    pub fn parse(raw: &str, context: &str) -> Result<Self> {
        let mut version = None;
        let mut min_gap = 2;
        let mut threshold = 3;
        let mut sections: [(&str, Vec<String>); 5] = [
            ("uncertainty", Vec::new()),
            ("process_gap", Vec::new()),
            ("lab_confirmation", Vec::new()),
            ("side_effect", Vec::new()),
            ("hierarchy", Vec::new()),
        ];
        let mut current: Option<usize> = None;
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::schema(format!("{context} line {}", n + 1), msg);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let idx = sections
                    .iter()
                    .position(|(s, _)| *s == name.trim())
                    .ok_or_else(|| at(format!("unknown section [{name}]")))?;
                current = Some(idx);
                continue;
            }
            match current {
                Some(idx) => sections[idx].1.push(line.to_string()),
                None => {
                    let (k, v) = line
                        .split_once(':')
                        .ok_or_else(|| at(format!("expected `key: value`, found `{line}`")))?;
                    let v = v.trim();
                    let count = || v.parse::<usize>().map_err(|_| at(format!("`{k}` must be a positive integer")));
                    match k.trim() {
                        "version" => version = Some(v.to_string()),
                        "min_process_gap_indicators" => min_gap = count()?,
                        "uncertainty_threshold" => threshold = count()?,
                        other => return Err(at(format!("unknown setting `{other}`"))),
                    }
                }
            }
        }
        let [(_, uncertainty), (_, gap), (_, lab), (_, side), (_, hierarchy)] = sections;
        let config = Self {
            version: version.ok_or_else(|| Error::schema(context, "missing `version:` line"))?,
            uncertainty_lexicon: uncertainty,
            process_gap_indicators: gap,
            lab_confirmation_patterns: lab,
            side_effect_patterns: side,
            hierarchy_markers: hierarchy,
            min_process_gap_indicators: min_gap,
            uncertainty_threshold: threshold,
        };
        config.validate(context)?;
        Ok(config)
    }

    fn validate(&self, context: &str) -> Result<()> {
        for (name, list) in [
            ("uncertainty", &self.uncertainty_lexicon),
            ("process_gap", &self.process_gap_indicators),
            ("lab_confirmation", &self.lab_confirmation_patterns),
            ("side_effect", &self.side_effect_patterns),
            ("hierarchy", &self.hierarchy_markers),
        ] {
            if list.is_empty() {
                return Err(Error::schema(context, format!("section [{name}] is empty or missing")));
            }
        }
        if self.min_process_gap_indicators == 0 || self.uncertainty_threshold == 0 {
            return Err(Error::schema(context, "thresholds must be >= 1"));
        }
        Ok(())
    }
}
