//! Batch evaluation over a labelled dataset.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{average_reports, compute_metrics, DatasetStats, EvalRecord, MetricsReport, Prediction, ScoreMode};
use crate::llm::{LedgerSnapshot, PromptMode};
use crate::pipeline::{NoteRunner, PipelineKind, Transcript};
use crate::retrieval::RetrievalCounters;
use crate::Label;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub runs: usize,
    pub concurrency: usize,
    /// When set, the report and per-case transcripts are written here.
    pub output_dir: Option<PathBuf>,
    /// Resolved configuration, embedded in the report as-is.
    pub config_snapshot: serde_json::Value,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            runs: 2,
            concurrency: 4,
            output_dir: None,
            config_snapshot: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub note_id: String,
    pub gold: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    /// `None` when every note failed.
    pub metrics: Option<MetricsReport>,
    pub failed: usize,
    pub cases: Vec<CaseOutcome>,
    pub usage: LedgerSnapshot,
    pub retrieval: RetrievalCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub pipeline: PipelineKind,
    pub mode: PromptMode,
    pub score_mode: ScoreMode,
    pub dataset: DatasetStats,
    pub runs: Vec<RunSummary>,
    pub averaged: Option<MetricsReport>,
    pub usage: LedgerSnapshot,
    pub retrieval: RetrievalCounters,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Column order: Accuracy, F1, Precision, Recall, ROC-AUC, PR-AUC.
    pub fn table(&self) -> String {
        let mut out = String::from("Pipeline         | Mode      | Accuracy | F1     | Precision | Recall | ROC-AUC | PR-AUC\n");
        out.push_str(&table_row(self.pipeline, self.mode, self.averaged.as_ref()));
        out
    }

    pub fn failed_total(&self) -> usize {
        self.runs.iter().map(|r| r.failed).sum()
    }
}

/// One formatted table row; metrics to two decimals, `N/A` when undefined.
pub fn table_row(pipeline: PipelineKind, mode: PromptMode, metrics: Option<&MetricsReport>) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.2}"));
    let m = |f: fn(&MetricsReport) -> Option<f64>| fmt(metrics.and_then(f));
    format!(
        "{:<16} | {:<9} | {:>8} | {:>6} | {:>9} | {:>6} | {:>7} | {:>6}\n",
        pipeline.as_str(),
        mode.to_string(),
        m(|r| Some(r.accuracy)),
        m(|r| Some(r.f1)),
        m(|r| Some(r.precision)),
        m(|r| Some(r.recall)),
        m(|r| r.roc_auc),
        m(|r| r.pr_auc),
    )
}

/// File-system safe name for a note id.
fn case_file_name(note_id: &str) -> String {
    let safe: String = note_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Runs every record `options.runs` times and averages per-run metrics.
///
/// Notes whose pipeline fails are excluded from that run's metrics and
/// counted in `failed`. Record order is preserved in every output.
pub fn run_evaluation(runner: &NoteRunner, records: &[EvalRecord], options: &EvalOptions) -> Result<EvalReport> {
    if options.runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    if options.concurrency == 0 {
        return Err(Error::Config("concurrency must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    if let Some(dir) = &options.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let retrieval_now = || runner.ctx.retriever.as_ref().map(|r| r.counters()).unwrap_or_default();
    let mut runs = Vec::with_capacity(options.runs);
    for run in 1..=options.runs {
        let before = retrieval_now();
        let results: Vec<Result<Transcript>> =
            pool.install(|| records.par_iter().map(|r| runner.run(&r.note_id, &r.text)).collect());
        let after = retrieval_now();

        if let Some(dir) = &options.output_dir {
            let case_dir = dir.join(format!("run-{run}"));
            fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
            for t in results.iter().flatten() {
                t.write(&case_dir.join(case_file_name(&t.note_id)))?;
            }
        }

        let mut usage = LedgerSnapshot::default();
        let mut cases = Vec::with_capacity(records.len());
        let mut predictions = Vec::new();
        let mut scored = Vec::new();
        for (record, result) in records.iter().zip(results) {
            match result {
                Ok(t) => {
                    usage.merge(&t.usage);
                    predictions.push(Prediction {
                        note_id: t.note_id.clone(),
                        predicted: t.final_label,
                        score: t.score,
                    });
                    scored.push(record.clone());
                    cases.push(CaseOutcome {
                        note_id: record.note_id.clone(),
                        gold: record.gold_label,
                        predicted: Some(t.final_label),
                        score: Some(t.score),
                        error: None,
                    });
                }
                Err(e) => {
                    tracing::warn!(note = %record.note_id, run, error = %e, "note failed; excluded from metrics");
                    cases.push(CaseOutcome {
                        note_id: record.note_id.clone(),
                        gold: record.gold_label,
                        predicted: None,
                        score: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let failed = records.len() - predictions.len();
        let metrics = if predictions.is_empty() {
            None
        } else {
            Some(compute_metrics(&predictions, &scored)?)
        };
        runs.push(RunSummary {
            run,
            metrics,
            failed,
            cases,
            usage,
            retrieval: RetrievalCounters {
                dense: after.dense - before.dense,
                sparse: after.sparse - before.sparse,
                online: after.online - before.online,
            },
        });
    }

    let per_run: Vec<MetricsReport> = runs.iter().filter_map(|r| r.metrics.clone()).collect();
    let mut usage = LedgerSnapshot::default();
    let mut retrieval = RetrievalCounters::default();
    for r in &runs {
        usage.merge(&r.usage);
        retrieval.dense += r.retrieval.dense;
        retrieval.sparse += r.retrieval.sparse;
        retrieval.online += r.retrieval.online;
    }
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        pipeline: runner.pipeline,
        mode: runner.ctx.mode,
        score_mode: runner.score_mode,
        dataset: DatasetStats::of(records),
        runs,
        averaged: average_reports(&per_run),
        usage,
        retrieval,
        config: options.config_snapshot.clone(),
    };
    if let Some(dir) = &options.output_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let json = dir.join("report.json");
    fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
    let txt = dir.join("report.txt");
    fs::write(&txt, report.table()).map_err(|e| Error::io(&txt, e))
}
