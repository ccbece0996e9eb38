//! Byte-for-byte transcript snapshots for the fixture run.
//! Regenerate with `BLUEMED_UPDATE_GOLDEN=1 cargo test --test golden`.

mod common;

use std::fs;
use std::path::PathBuf;

use bluemed::pipeline::PipelineKind;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn bluemed_transcripts_match_golden() {
    let ws = common::Workspace::new();
    let runner = ws.runner(PipelineKind::Bluemed);
    let update = std::env::var_os("BLUEMED_UPDATE_GOLDEN").is_some();
    let dir = golden_dir();
    if update {
        fs::create_dir_all(&dir).unwrap();
    }
    let tmp = ws.path().display().to_string();
    for rec in common::fixture_records() {
        let json = runner.run(&rec.note_id, &rec.text).unwrap().to_json().unwrap();
        assert!(!json.contains(&tmp), "transcript leaks the temp path");
        let path = dir.join(format!("{}.json", rec.note_id));
        if update {
            fs::write(&path, &json).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(json == want, "{} differs from its golden copy", rec.note_id);
    }
}
