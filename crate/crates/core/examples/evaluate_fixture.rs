//! Batch evaluation of every pipeline on the six-note fixture, printed as a
//! results table.
//!
//! cargo run --example evaluate_fixture

use std::error::Error;
use std::io::{self, Write};
use std::path::Path;

use bluemed::config::{Overrides, RunConfig};
use bluemed::eval::{load_dataset, run_evaluation, DatasetStats, EvalOptions};
use bluemed::pipeline::{NoteRunner, PipelineKind};

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let records = load_dataset(&fixtures.join("medec_fixture.csv"))?;
    write!(out, "{}", DatasetStats::of(&records))?;

    let scratch = tempfile::tempdir()?;
    let mut config = RunConfig::load(&fixtures.join("bluemed.toml"))?;
    config.kb.root = scratch.path().join("kb");
    config.build_kb(false)?;
    let overrides = Overrides {
        mock_script: Some(fixtures.join("mock_script.json")),
        ..Overrides::default()
    };

    let mut header = true;
    for pipeline in PipelineKind::ALL {
        let runner = NoteRunner::new(config.debate_context(pipeline, &overrides)?, pipeline, config.run.score_mode)?;
        let options = EvalOptions {
            runs: config.run.runs,
            concurrency: config.run.concurrency,
            output_dir: Some(scratch.path().join(pipeline.cli_name())),
            config_snapshot: config.snapshot(),
        };
        let report = run_evaluation(&runner, &records, &options)?;
        let table = report.table();
        let mut lines = table.lines();
        let head = lines.next().unwrap_or_default();
        if header {
            writeln!(out, "{head}")?;
            header = false;
        }
        for line in lines {
            writeln!(out, "{line}")?;
        }
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
