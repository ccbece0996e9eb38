//! The post-hoc safety cascade on hand-built debate outcomes, with the audit
//! trail each decision leaves behind.
//!
//! cargo run --example safety_cascade

use std::error::Error;
use std::io::{self, Write};

use bluemed::debate::{parse_expert_argument, JudgeVerdict};
use bluemed::safety::SafetyLayer;
use bluemed::{Expert, Label};

struct Case {
    name: &'static str,
    note: &'static str,
    judge: Label,
    a: &'static str,
    b: &'static str,
}

const CASES: &[Case] = &[
    Case {
        name: "judge says CORRECT, both experts name the same substitution",
        note: "Started on methotrexate 500 mg twice daily for type 2 diabetes.",
        judge: Label::Correct,
        a: "Wrong Term: methotrexate\nCorrect Term: metformin\nConfidence Score: 9\nBased on my analysis, this note is INCORRECT",
        b: "Wrong Term: methotrexate\nCorrect Term: metformin\nConfidence Score: 8\nBased on my analysis, this note is INCORRECT",
    },
    Case {
        name: "judge says INCORRECT, nobody names a term pair",
        note: "Observed overnight and discharged with oral analgesics.",
        judge: Label::Incorrect,
        a: "Wrong Term: None\nCorrect Term: None\nConfidence Score: 6\nBased on my analysis, this note is INCORRECT",
        b: "Wrong Term: None\nCorrect Term: None\nConfidence Score: 5\nBased on my analysis, this note is CORRECT",
    },
    Case {
        name: "judge says INCORRECT against a lab-confirmed diagnosis",
        note: "Streptococcal pharyngitis, culture confirmed, treated with amoxicillin.",
        judge: Label::Incorrect,
        a: "Wrong Term: None\nCorrect Term: None\nConfidence Score: 6\nBased on my analysis, this note is INCORRECT",
        b: "Wrong Term: None\nCorrect Term: None\nConfidence Score: 8\nBased on my analysis, this note is CORRECT",
    },
    Case {
        name: "judge says INCORRECT, expert A backs it with a term pair",
        note: "TSH suppressed, free T4 high; diagnosed with hypothyroidism.",
        judge: Label::Incorrect,
        a: "Wrong Term: hypothyroidism\nCorrect Term: hyperthyroidism\nConfidence Score: 8\nBased on my analysis, this note is INCORRECT",
        b: "Wrong Term: None\nCorrect Term: None\nConfidence Score: 6\nBased on my analysis, this note is CORRECT",
    },
];

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let layer = SafetyLayer::default();
    writeln!(out, "lexicon version {}", layer.config().version)?;
    for case in CASES {
        let a = parse_expert_argument(case.a, Expert::A, 1, layer.uncertainty_matcher())?;
        let b = parse_expert_argument(case.b, Expert::B, 1, layer.uncertainty_matcher())?;
        let verdict = JudgeVerdict {
            answer: case.judge,
            confidence: 7,
            winner: Expert::A,
            reasoning: String::new(),
        };
        let audit = layer.apply(&verdict, &a, &b, case.note);
        writeln!(out, "{}", case.name)?;
        for fired in &audit.fired_rules {
            writeln!(out, "  fired {}: {}", fired.rule.as_str(), fired.evidence.join("; "))?;
        }
        for step in &audit.override_chain {
            writeln!(out, "  override {} {} -> {}", step.rule.as_str(), step.from, step.to)?;
        }
        writeln!(
            out,
            "  {} -> {} (replay agrees: {})",
            audit.input_label,
            audit.final_label,
            audit.replay() == audit.final_label
        )?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run(&mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
