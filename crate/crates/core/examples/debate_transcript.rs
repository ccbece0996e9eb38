//! One note through the full pipeline against scripted model responses:
//! decomposition, partitioned retrieval, debate, blinded judge and safety.
//!
//! cargo run --example debate_transcript [note-file]

use std::error::Error;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use bluemed::cli::InspectSummary;
use bluemed::config::{Overrides, RunConfig};
use bluemed::pipeline::{NoteRunner, PipelineKind};

pub fn run(note_path: Option<PathBuf>, out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let note_path = note_path.unwrap_or_else(|| fixtures.join("notes/fx-03.txt"));
    let note = std::fs::read_to_string(&note_path)?;
    let note_id = note_path.file_stem().map_or("note".into(), |s| s.to_string_lossy().into_owned());

    let scratch = tempfile::tempdir()?;
    let mut config = RunConfig::load(&fixtures.join("bluemed.toml"))?;
    config.kb.root = scratch.path().join("kb");
    config.build_kb(false)?;

    let overrides = Overrides {
        mock_script: Some(fixtures.join("mock_script.json")),
        ..Overrides::default()
    };
    let ctx = config.debate_context(PipelineKind::Bluemed, &overrides)?;
    let runner = NoteRunner::new(ctx, PipelineKind::Bluemed, config.run.score_mode)?;
    let transcript = runner.run(&note_id, &note)?;

    write!(out, "{}", InspectSummary::of(&transcript).render())?;
    let path = scratch.path().join(format!("{note_id}.json"));
    transcript.write(&path)?;
    writeln!(out, "transcript is {} bytes of JSON", std::fs::metadata(&path)?.len())?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let note = std::env::args_os().nth(1).map(PathBuf::from);
    if let Err(e) = run(note, &mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
