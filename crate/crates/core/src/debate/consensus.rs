use serde::{Deserialize, Serialize};

use crate::debate::ExpertArgument;
use crate::text::normalize_term;
use crate::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consensus {
    pub reached: bool,
    pub reason: String,
}

fn same_term(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => normalize_term(a) == normalize_term(b),
        _ => false,
    }
}

/// Agreement requires equal labels and, when both say INCORRECT, equal wrong
/// and correct terms (case-insensitive, whitespace-normalized). A term missing
/// on either side counts as a mismatch.
pub fn check_consensus(a: &ExpertArgument, b: &ExpertArgument) -> Consensus {
    let (reached, reason) = if a.label != b.label {
        (false, format!("labels differ ({} vs {})", a.label, b.label))
    } else if a.label == Label::Correct {
        (true, "both experts judge the note CORRECT".to_string())
    } else if !same_term(a.wrong_term.as_deref(), b.wrong_term.as_deref()) {
        (false, "both INCORRECT but the wrong terms differ or are missing".to_string())
    } else if !same_term(a.correct_term.as_deref(), b.correct_term.as_deref()) {
        (false, "both INCORRECT but the correct terms differ or are missing".to_string())
    } else {
        (true, "both INCORRECT with matching wrong and correct terms".to_string())
    };
    Consensus { reached, reason }
}
