//! Weighted reciprocal rank fusion over three ranked lists, with the
//! contribution of each method shown per document.
//!
//! cargo run --example rrf_fusion

use std::error::Error;
use std::io::{self, Write};

use bluemed::retrieval::{fuse_rrf, FusionConfig, Method, RankedList};

fn list(method: Method, ids: &[&str]) -> RankedList {
    RankedList::new(method, ids.iter().map(|id| (id.to_string(), 0.0)).collect())
}

pub fn run(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let config = FusionConfig::default();
    writeln!(
        out,
        "weights dense={} sparse={} online={} k={}",
        config.w_dense, config.w_sparse, config.w_online, config.k
    )?;
    let lists = [
        list(Method::Dense, &["metformin-1", "diabetes-2", "insulin-4"]),
        list(Method::Sparse, &["diabetes-2", "insulin-4", "metformin-1"]),
        list(Method::Online, &["online-9", "metformin-1"]),
    ];
    for r in fuse_rrf(&lists, &config)? {
        let ranks: Vec<String> = r.contributions.iter().map(|(m, rank)| format!("{m:?}@{rank}")).collect();
        writeln!(out, "{:<12} {:.8}  {}", r.chunk_id, r.rrf_score, ranks.join(" "))?;
    }

    // Dense rank 1 plus sparse rank 3, the case worked by hand: 0.5/61 + 0.3/63.
    let worked = fuse_rrf(
        &[list(Method::Dense, &["d"]), list(Method::Sparse, &["x", "y", "d"])],
        &config,
    )?;
    let d = worked.iter().find(|r| r.chunk_id == "d").expect("d is fused");
    writeln!(out, "dense@1 + sparse@3 = {:.8}", d.rrf_score)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run(&mut io::stdout()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
