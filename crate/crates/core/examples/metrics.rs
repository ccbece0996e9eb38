//! The metric suite on small hand-checkable score vectors.
//!
//! cargo run --example metrics

use std::error::Error;
use std::io::{self, Write};

use bluemed::eval::{compute_metrics, roc_auc, EvalRecord, Prediction};
use bluemed::Label;

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let i = true;
    let c = false;
    for (scores, gold) in [
        (vec![0.9, 0.8, 0.3], vec![i, i, c]),
        (vec![0.2, 0.5, 0.9], vec![i, c, i]),
    ] {
        let auc = roc_auc(&scores, &gold).map(|v| v * 100.0);
        writeln!(out, "scores {scores:?} gold {gold:?} -> ROC-AUC {auc:?}")?;
    }

    let gold: Vec<EvalRecord> = [("a", Label::Incorrect), ("b", Label::Incorrect), ("c", Label::Correct), ("d", Label::Correct)]
        .into_iter()
        .map(|(id, label)| EvalRecord {
            note_id: id.into(),
            text: String::new(),
            gold_label: label,
            error_type: None,
        })
        .collect();
    let predictions: Vec<Prediction> = [("a", Label::Incorrect, 0.9), ("b", Label::Correct, 0.4), ("c", Label::Correct, 0.2), ("d", Label::Incorrect, 0.6)]
        .into_iter()
        .map(|(id, predicted, score)| Prediction {
            note_id: id.into(),
            predicted,
            score,
        })
        .collect();
    let m = compute_metrics(&predictions, &gold)?;
    writeln!(
        out,
        "accuracy {:.2} precision {:.2} recall {:.2} f1 {:.2} roc-auc {:.2} pr-auc {:.2}",
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.roc_auc.unwrap_or(f64::NAN),
        m.pr_auc.unwrap_or(f64::NAN)
    )?;
    writeln!(out, "confusion {:?}", m.confusion)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run(&mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
