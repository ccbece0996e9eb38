//! Ingest the fixture corpora into two source-labelled collections, save them
//! with their embeddings and load them back.
//!
//! cargo run --example build_knowledge_base

use std::error::Error;
use std::io::{self, Write};
use std::path::Path;

use bluemed::kb::{ingest_collection, CategoryMap, ChunkingPolicy, IngestOptions, KnowledgeBase, Source};

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus");
    let policy = ChunkingPolicy::new(400, 80)?;
    let mut collections = Vec::new();
    for source in [Source::Mayo, Source::Webmd] {
        let dir = corpus.join(source.collection_name());
        let report = ingest_collection(&dir, source, policy, &CategoryMap::from_sidecar(&dir)?, IngestOptions::default())?;
        let stats = report.collection.stats();
        writeln!(
            out,
            "{source}: {} documents -> {} chunks (~{} tokens)",
            stats.documents, stats.chunks, stats.token_estimate
        )?;
        collections.push(report.collection);
    }
    let webmd = collections.pop().expect("two collections");
    let mayo = collections.pop().expect("two collections");

    let first = &mayo.chunks()[0];
    writeln!(out, "first MAYO chunk: {} categories {:?}", first.chunk_id, first.category)?;
    writeln!(out, "  fingerprint {}", first.fingerprint)?;

    let kb = KnowledgeBase::new(mayo, webmd)?;
    let dir = tempfile::tempdir()?;
    kb.save(dir.path())?;
    let loaded = KnowledgeBase::load(dir.path())?;
    writeln!(
        out,
        "reloaded {} + {} chunks from {}",
        loaded.collection(Source::Mayo).len(),
        loaded.collection(Source::Webmd).len(),
        dir.path().display()
    )?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run(&mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
