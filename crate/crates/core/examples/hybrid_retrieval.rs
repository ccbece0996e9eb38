//! Source-partitioned evidence retrieval: each expert searches only its own
//! collection, and the judge's cross-source search covers both.
//!
//! cargo run --example hybrid_retrieval

use std::error::Error;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use bluemed::kb::{ingest_collection, CategoryMap, ChunkingPolicy, IngestOptions, KnowledgeBase, Source};
use bluemed::llm::{EmbeddingService, HashEmbedder};
use bluemed::retrieval::{Bm25Params, FixtureFetcher, FusionConfig, HybridRetriever, SubQuery};
use bluemed::Expert;

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let policy = ChunkingPolicy::new(400, 80)?;
    let ingest = |source: Source| {
        let dir = fixtures.join("corpus").join(source.collection_name());
        ingest_collection(&dir, source, policy, &CategoryMap::directory_convention(), IngestOptions::default())
            .map(|r| r.collection)
    };
    let kb = KnowledgeBase::new(ingest(Source::Mayo)?, ingest(Source::Webmd)?)?;
    let embedder = Arc::new(EmbeddingService::new(Arc::new(HashEmbedder::default())));
    let fetcher = FixtureFetcher::load(&fixtures.join("online_fixture.json"))?;
    let retriever = HybridRetriever::build(&kb, embedder, FusionConfig::default(), Bm25Params::default())?
        .with_fetcher(Arc::new(fetcher));

    let sub_queries = vec![
        SubQuery::new("type 2 diabetes mellitus first-line therapy", "diagnosis"),
        SubQuery::new("methotrexate indications", "medication"),
    ];
    for expert in [Expert::A, Expert::B] {
        let evidence = retriever.retrieve_for_expert(&sub_queries, expert)?;
        writeln!(out, "expert {expert} ({}):", expert.source())?;
        for c in &evidence.chunks {
            writeln!(out, "  {:.5} {:<7} {}", c.score, c.chunk.source.as_str(), c.chunk.chunk_id)?;
        }
        for w in &evidence.warnings {
            writeln!(out, "  warning: {w}")?;
        }
    }

    let before = retriever.counters().online;
    let claims = ["methotrexate metformin".to_string()];
    let cross = retriever.cross_source_retrieve(
        "Started on methotrexate 500 mg twice daily for type 2 diabetes.",
        &claims,
    )?;
    for (source, chunks) in &cross {
        let ids: Vec<&str> = chunks.iter().map(|c| c.chunk.chunk_id.as_str()).collect();
        writeln!(out, "judge evidence {source}: {}", ids.join(", "))?;
    }
    writeln!(out, "online searches during cross-source retrieval: {}", retriever.counters().online - before)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run(&mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
