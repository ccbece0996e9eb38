//! Prompt templates.
//!
//! Expert system prompts are a role preamble followed by the shared rule
//! block; few-shot mode appends the exemplar block after the rules. The judge
//! prompt is standalone. Placeholders use `{{name}}` and must all be filled.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{([A-Za-z0-9_]+)\}\}").unwrap());

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    #[default]
    ZeroShot,
    FewShot,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::FewShot => "few-shot",
        })
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "zero-shot" => Ok(PromptMode::ZeroShot),
            "few-shot" => Ok(PromptMode::FewShot),
            other => Err(format!("unknown prompting mode `{other}` (expected zero-shot or few-shot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    BaseRules,
    ExpertA,
    ExpertB,
    Judge,
    Decompose,
    DecomposeUser,
    ExpertUser,
    RebuttalUser,
    JudgeUser,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::BaseRules,
        TemplateId::ExpertA,
        TemplateId::ExpertB,
        TemplateId::Judge,
        TemplateId::Decompose,
        TemplateId::DecomposeUser,
        TemplateId::ExpertUser,
        TemplateId::RebuttalUser,
        TemplateId::JudgeUser,
    ];

    /// File name under `prompts/`. For the expert ids this is the preamble only.
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::BaseRules => "base_rules.txt",
            TemplateId::ExpertA => "expert_a.txt",
            TemplateId::ExpertB => "expert_b.txt",
            TemplateId::Judge => "judge.txt",
            TemplateId::Decompose => "decompose.txt",
            TemplateId::DecomposeUser => "decompose_user.txt",
            TemplateId::ExpertUser => "expert_user.txt",
            TemplateId::RebuttalUser => "rebuttal_user.txt",
            TemplateId::JudgeUser => "judge_user.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::BaseRules => include_str!("../../prompts/base_rules.txt"),
            TemplateId::ExpertA => include_str!("../../prompts/expert_a.txt"),
            TemplateId::ExpertB => include_str!("../../prompts/expert_b.txt"),
            TemplateId::Judge => include_str!("../../prompts/judge.txt"),
            TemplateId::Decompose => include_str!("../../prompts/decompose.txt"),
            TemplateId::DecomposeUser => include_str!("../../prompts/decompose_user.txt"),
            TemplateId::ExpertUser => include_str!("../../prompts/expert_user.txt"),
            TemplateId::RebuttalUser => include_str!("../../prompts/rebuttal_user.txt"),
            TemplateId::JudgeUser => include_str!("../../prompts/judge_user.txt"),
        }
    }
}

const FEW_SHOT_HEADER_FILE: &str = "few_shot_header.txt";
const BUILTIN_FEW_SHOT_HEADER: &str = include_str!("../../prompts/few_shot_header.txt");

/// The exemplar block that ships with the crate (one worked example).
pub const BUILTIN_EXEMPLARS: &str = include_str!("../../prompts/exemplars.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct PromptLibrary {
    bodies: BTreeMap<TemplateId, String>,
    few_shot_header: String,
    exemplars: Option<String>,
}

impl PromptLibrary {
    /// Built-in templates without any exemplars configured.
    pub fn builtin() -> Self {
        Self {
            bodies: TemplateId::ALL
                .iter()
                .map(|id| (*id, id.builtin().trim_end().to_string()))
                .collect(),
            few_shot_header: BUILTIN_FEW_SHOT_HEADER.trim_end().to_string(),
            exemplars: None,
        }
    }

    /// Built-in templates with any same-named files in `dir` taking precedence.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut lib = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.exists() {
                let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                lib.bodies.insert(id, body.trim_end().to_string());
            }
        }
        let header = dir.join(FEW_SHOT_HEADER_FILE);
        if header.exists() {
            lib.few_shot_header = fs::read_to_string(&header)
                .map_err(|e| Error::io(&header, e))?
                .trim_end()
                .to_string();
        }
        Ok(lib)
    }

    pub fn with_exemplars(mut self, exemplars: impl Into<String>) -> Self {
        let text: String = exemplars.into();
        self.exemplars = Some(text.trim_end().to_string()).filter(|t| !t.trim().is_empty());
        self
    }

    pub fn with_exemplar_file(self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            return Err(Error::Config(format!("exemplar file {} is empty", path.display())));
        }
        Ok(self.with_exemplars(text))
    }

    pub fn has_exemplars(&self) -> bool {
        self.exemplars.is_some()
    }

    fn assemble(&self, id: TemplateId, mode: PromptMode) -> Result<String> {
        let body = &self.bodies[&id];
        let with_rules = match id {
            TemplateId::ExpertA | TemplateId::ExpertB => {
                format!("{body}\n\n{}", self.bodies[&TemplateId::BaseRules])
            }
            _ => body.clone(),
        };
        let takes_exemplars = matches!(id, TemplateId::ExpertA | TemplateId::ExpertB | TemplateId::BaseRules);
        match (mode, takes_exemplars) {
            (PromptMode::FewShot, true) => {
                let exemplars = self.exemplars.as_ref().ok_or(Error::MissingExemplars)?;
                Ok(format!("{with_rules}\n\n{}\n\n{exemplars}", self.few_shot_header))
            }
            _ => Ok(with_rules),
        }
    }

    /// Renders a template, failing if any `{{placeholder}}` lacks a value.
    pub fn render(&self, id: TemplateId, variables: &[(&str, &str)], mode: PromptMode) -> Result<String> {
        let template = self.assemble(id, mode)?;
        let values: BTreeMap<&str, &str> = variables.iter().copied().collect();
        let missing: BTreeSet<String> = PLACEHOLDER
            .captures_iter(&template)
            .map(|c| c[1].to_string())
            .filter(|name| !values.contains_key(name.as_str()))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingPlaceholders(missing.into_iter().collect()));
        }
        Ok(PLACEHOLDER
            .replace_all(&template, |c: &regex::Captures<'_>| values[&c[1]].to_string())
            .into_owned())
    }

    pub fn system_prompt(&self, id: TemplateId, mode: PromptMode) -> Result<String> {
        self.render(id, &[], mode)
    }
}
