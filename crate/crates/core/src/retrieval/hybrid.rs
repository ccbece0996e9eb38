use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{ChunkingPolicy, EvidenceChunk, KnowledgeBase, Source};
use crate::llm::EmbeddingService;
use crate::retrieval::{
    dedup, fuse_rrf, max_merge, online_search, Bm25Index, Bm25Params, DenseIndex, FusedResult, FusionConfig,
    OnlineFetcher, RankedList, SubQuery,
};
use crate::Expert;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: EvidenceChunk,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertEvidence {
    pub chunks: Vec<ScoredChunk>,
    pub warnings: Vec<String>,
}

/// Number of searches issued per method since the retriever was built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalCounters {
    pub dense: u64,
    pub sparse: u64,
    pub online: u64,
}

impl RetrievalCounters {
    pub fn total(&self) -> u64 {
        self.dense + self.sparse + self.online
    }
}

#[derive(Default)]
struct Counters {
    dense: AtomicU64,
    sparse: AtomicU64,
    online: AtomicU64,
}

struct SourceIndex {
    dense: DenseIndex,
    sparse: Bm25Index,
}

/// Per-source dense and sparse indexes plus an optional live fetcher.
///
/// Immutable after [`HybridRetriever::build`]; every search takes `&self`.
pub struct HybridRetriever {
    indexes: BTreeMap<Source, SourceIndex>,
    chunks: HashMap<String, EvidenceChunk>,
    embedder: Arc<EmbeddingService>,
    fetcher: Option<Arc<dyn OnlineFetcher>>,
    fusion: FusionConfig,
    online_policy: ChunkingPolicy,
    counters: Counters,
}

impl HybridRetriever {
    /// Indexes both collections. Stored vectors are reused when they were made
    /// by the same embedding model; otherwise chunks are embedded now.
    pub fn build(
        kb: &KnowledgeBase,
        embedder: Arc<EmbeddingService>,
        fusion: FusionConfig,
        bm25: Bm25Params,
    ) -> Result<Self> {
        fusion.validate()?;
        let mut indexes = BTreeMap::new();
        let mut chunks = HashMap::new();
        for source in [Source::Mayo, Source::Webmd] {
            let collection = kb.collection(source);
            let ids: Vec<String> = collection.chunks().iter().map(|c| c.chunk_id.clone()).collect();
            let vectors = match kb.embeddings(source) {
                Some(stored) if stored.model == embedder.model_id() => {
                    embedder.check_dimension(stored.dimension)?;
                    stored.vectors.clone()
                }
                _ => collection
                    .chunks()
                    .iter()
                    .map(|c| embedder.embed(&c.text))
                    .collect::<Result<Vec<_>>>()?,
            };
            let dense = DenseIndex::new(collection.name(), ids, vectors)?;
            let sparse = Bm25Index::build(
                collection.name(),
                collection.chunks().iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())),
                bm25,
            );
            for c in collection.chunks() {
                if chunks.insert(c.chunk_id.clone(), c.clone()).is_some() {
                    return Err(Error::DuplicateChunk(c.chunk_id.clone()));
                }
            }
            indexes.insert(source, SourceIndex { dense, sparse });
        }
        Ok(Self {
            indexes,
            chunks,
            embedder,
            fetcher: None,
            fusion,
            online_policy: kb.collection(Source::Mayo).policy(),
            counters: Counters::default(),
        })
    }

    /// Enables the ONLINE method for expert retrieval.
    pub fn with_fetcher(mut self, fetcher: Arc<dyn OnlineFetcher>) -> Self {
        self.fetcher = Some(fetcher);
        self
    }

    pub fn online_enabled(&self) -> bool {
        self.fetcher.is_some()
    }

    pub fn fusion(&self) -> &FusionConfig {
        &self.fusion
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&EvidenceChunk> {
        self.chunks.get(chunk_id)
    }

    pub fn counters(&self) -> RetrievalCounters {
        RetrievalCounters {
            dense: self.counters.dense.load(Ordering::SeqCst),
            sparse: self.counters.sparse.load(Ordering::SeqCst),
            online: self.counters.online.load(Ordering::SeqCst),
        }
    }

    fn offline_lists(&self, query: &str, source: Source) -> Result<Vec<RankedList>> {
        let index = &self.indexes[&source];
        let n = self.fusion.candidates_per_method;
        let embedding = self.embedder.embed(query)?;
        self.counters.dense.fetch_add(1, Ordering::SeqCst);
        let dense = index.dense.search(&embedding, n)?;
        self.counters.sparse.fetch_add(1, Ordering::SeqCst);
        let sparse = index.sparse.search(query, n)?;
        Ok(vec![dense, sparse])
    }

    fn finish(
        &self,
        merged: Vec<FusedResult>,
        extra: &HashMap<String, EvidenceChunk>,
        top_k: usize,
    ) -> Result<Vec<ScoredChunk>> {
        let lookup = |id: &str| self.chunks.get(id).or_else(|| extra.get(id));
        let fingerprints: HashMap<String, String> = merged
            .iter()
            .filter_map(|r| lookup(&r.chunk_id).map(|c| (r.chunk_id.clone(), c.fingerprint.clone())))
            .collect();
        let mut kept = dedup(merged, &fingerprints)?;
        kept.truncate(top_k);
        kept.into_iter()
            .map(|r| {
                let chunk = lookup(&r.chunk_id).ok_or_else(|| Error::UnknownChunk(r.chunk_id.clone()))?;
                Ok(ScoredChunk {
                    chunk: chunk.clone(),
                    score: r.rrf_score,
                })
            })
            .collect()
    }

    /// Evidence for one expert from its own collection (and its own site online).
    ///
    /// Each sub-query is fused separately; a chunk's score is its best score
    /// over all sub-queries. Results are deduplicated by fingerprint and cut
    /// to `top_k_per_expert`.
    pub fn retrieve_for_expert(&self, sub_queries: &[SubQuery], expert: Expert) -> Result<ExpertEvidence> {
        if sub_queries.is_empty() {
            return Err(Error::Config("retrieval needs at least one sub-query".into()));
        }
        let source = expert.source();
        let mut warnings = Vec::new();
        let mut online_chunks = HashMap::new();
        let mut per_query = Vec::with_capacity(sub_queries.len());
        for q in sub_queries {
            let mut lists = self.offline_lists(&q.text, source)?;
            if let Some(fetcher) = &self.fetcher {
                self.counters.online.fetch_add(1, Ordering::SeqCst);
                let result = online_search(
                    fetcher.as_ref(),
                    &q.text,
                    source,
                    self.fusion.candidates_per_method,
                    &self.online_policy,
                );
                warnings.extend(result.warning);
                for c in result.chunks {
                    online_chunks.insert(c.chunk_id.clone(), c);
                }
                lists.push(result.list);
            }
            per_query.push(fuse_rrf(&lists, &self.fusion)?);
        }
        let chunks = self.finish(max_merge(per_query), &online_chunks, self.fusion.top_k_per_expert)?;
        if chunks.is_empty() {
            warnings.push(format!("no evidence retrieved for expert {expert}"));
        }
        Ok(ExpertEvidence { chunks, warnings })
    }

    /// Judge-stage evidence: one query combining the note and both experts'
    /// claims, run dense+sparse against each collection. Never goes online.
    pub fn cross_source_retrieve(&self, note: &str, claims: &[String]) -> Result<BTreeMap<Source, Vec<ScoredChunk>>> {
        let mut query = note.trim().to_string();
        for claim in claims.iter().map(|c| c.trim()).filter(|c| !c.is_empty()) {
            query.push('\n');
            query.push_str(claim);
        }
        let mut out = BTreeMap::new();
        for source in [Source::Mayo, Source::Webmd] {
            let fused = fuse_rrf(&self.offline_lists(&query, source)?, &self.fusion)?;
            out.insert(source, self.finish(fused, &HashMap::new(), self.fusion.cross_source_top_k)?);
        }
        Ok(out)
    }
}
