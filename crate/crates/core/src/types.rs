use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kb::Source;

/// Binary classification of a clinical note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "CORRECT",
            Label::Incorrect => "INCORRECT",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CORRECT" => Ok(Label::Correct),
            "INCORRECT" => Ok(Label::Incorrect),
            other => Err(format!("unknown label `{other}` (expected CORRECT or INCORRECT)")),
        }
    }
}

/// One of the two domain experts. Expert A reads Mayo Clinic, expert B reads WebMD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expert {
    A,
    B,
}

impl Expert {
    /// The knowledge collection this expert is restricted to.
    pub fn source(self) -> Source {
        match self {
            Expert::A => Source::Mayo,
            Expert::B => Source::Webmd,
        }
    }

    pub fn other(self) -> Expert {
        match self {
            Expert::A => Expert::B,
            Expert::B => Expert::A,
        }
    }
}

impl fmt::Display for Expert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expert::A => f.write_str("A"),
            Expert::B => f.write_str("B"),
        }
    }
}
