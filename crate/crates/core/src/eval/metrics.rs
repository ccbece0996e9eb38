//! Classification and ranking metrics. INCORRECT is the positive class.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalRecord;
use crate::Label;

/// How a final label and judge confidence become a ranking score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// conf/10 for INCORRECT, 1 - conf/10 for CORRECT.
    #[default]
    Confidence,
    /// 1 for INCORRECT, 0 for CORRECT.
    Binary,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "confidence" => Ok(ScoreMode::Confidence),
            "binary" => Ok(ScoreMode::Binary),
            other => Err(format!("unknown score mode `{other}` (allowed: confidence, binary)")),
        }
    }
}

/// Probability-like score that the note is INCORRECT.
pub fn score_from_verdict(final_label: Label, confidence: u8) -> f64 {
    let c = f64::from(confidence.clamp(1, 10)) / 10.0;
    match final_label {
        Label::Incorrect => c,
        Label::Correct => 1.0 - c,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub note_id: String,
    pub predicted: Label,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (gold, predicted) in pairs {
            match (gold, predicted) {
                (Label::Incorrect, Label::Incorrect) => c.tp += 1.0,
                (Label::Correct, Label::Incorrect) => c.fp += 1.0,
                (Label::Correct, Label::Correct) => c.tn += 1.0,
                (Label::Incorrect, Label::Correct) => c.fn_ += 1.0,
            }
        }
        c
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Metrics in percent. Rank metrics are `None` when only one class is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    /// Counts for a single run, means when several runs are averaged.
    pub confusion: Confusion,
    pub runs_averaged: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// ROC-AUC from average ranks (the Mann-Whitney statistic), as a fraction.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let n_pos = n_pos as f64;
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Average precision, stepping through distinct score thresholds from high to low.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// Scores predictions against gold labels. Both sides must cover the same ids.
pub fn compute_metrics(predictions: &[Prediction], gold: &[EvalRecord]) -> Result<MetricsReport> {
    let gold_by_id: HashMap<&str, Label> = gold.iter().map(|r| (r.note_id.as_str(), r.gold_label)).collect();
    let predicted_ids: HashSet<&str> = predictions.iter().map(|p| p.note_id.as_str()).collect();
    if predicted_ids.len() != predictions.len() {
        return Err(Error::IdMismatch("duplicate prediction ids".into()));
    }
    let mut missing: Vec<&str> = gold_by_id.keys().filter(|id| !predicted_ids.contains(*id)).copied().collect();
    let mut extra: Vec<&str> = predicted_ids.iter().filter(|id| !gold_by_id.contains_key(*id)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(Error::IdMismatch(format!(
            "missing predictions for [{}]; unknown ids [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let pairs: Vec<(Label, &Prediction)> = predictions.iter().map(|p| (gold_by_id[p.note_id.as_str()], p)).collect();
    let confusion = Confusion::from_pairs(pairs.iter().map(|(g, p)| (*g, p.predicted)));
    let mut warnings = Vec::new();
    let ratio = |num: f64, den: f64, name: &str, warnings: &mut Vec<String>| {
        if den == 0.0 {
            warnings.push(format!("{name} is undefined (zero denominator); reported as 0"));
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(confusion.tp, confusion.tp + confusion.fp, "precision", &mut warnings);
    let recall = ratio(confusion.tp, confusion.tp + confusion.fn_, "recall", &mut warnings);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = if pairs.is_empty() {
        0.0
    } else {
        (confusion.tp + confusion.tn) / confusion.total()
    };
    let scores: Vec<f64> = pairs.iter().map(|(_, p)| p.score).collect();
    let positive: Vec<bool> = pairs.iter().map(|(g, _)| *g == Label::Incorrect).collect();
    let roc = roc_auc(&scores, &positive);
    let pr = average_precision(&scores, &positive);
    if roc.is_none() {
        warnings.push("only one gold class present; ROC-AUC and PR-AUC are undefined".into());
    }
    Ok(MetricsReport {
        n: pairs.len(),
        accuracy: accuracy * 100.0,
        precision: precision * 100.0,
        recall: recall * 100.0,
        f1: f1 * 100.0,
        roc_auc: roc.map(|v| v * 100.0),
        pr_auc: pr.map(|v| v * 100.0),
        confusion,
        runs_averaged: 1,
        warnings,
    })
}

/// Arithmetic mean of per-run reports. A rank metric missing from any run is missing.
pub fn average_reports(reports: &[MetricsReport]) -> Option<MetricsReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: fn(&MetricsReport) -> Option<f64>| {
        reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    let mut warnings: Vec<String> = reports.iter().flat_map(|r| r.warnings.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();
    Some(MetricsReport {
        n: reports.iter().map(|r| r.n).max().unwrap_or(0),
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        roc_auc: mean_opt(|r| r.roc_auc),
        pr_auc: mean_opt(|r| r.pr_auc),
        confusion: Confusion {
            tp: mean(|r| r.confusion.tp),
            fp: mean(|r| r.confusion.fp),
            tn: mean(|r| r.confusion.tn),
            fn_: mean(|r| r.confusion.fn_),
        },
        runs_averaged: reports.len(),
        warnings,
    })
}
