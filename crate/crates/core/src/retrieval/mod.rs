//! Dense, sparse and online retrieval with weighted reciprocal rank fusion.

mod dense;
mod hybrid;
mod online;
mod sparse;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dense::DenseIndex;
pub use hybrid::{ExpertEvidence, HybridRetriever, RetrievalCounters, ScoredChunk};
pub use online::{
    online_search, FetchError, FetcherSettings, FixtureFetcher, HttpFetcher, OnlineFetcher, OnlinePassage,
    OnlineResult, FIXTURE_FETCHER_VERSION,
};
pub use sparse::{Bm25Index, Bm25Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Dense,
    Sparse,
    Online,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dense => "DENSE",
            Method::Sparse => "SPARSE",
            Method::Online => "ONLINE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    pub text: String,
    pub aspect: String,
}

impl SubQuery {
    pub fn new(text: impl Into<String>, aspect: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            aspect: aspect.into(),
        }
    }
}

/// One method's output for one query. Ranks are 1-based positions in `entries`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub method: Method,
    pub entries: Vec<(String, f64)>,
    pub weight: f64,
}

impl RankedList {
    pub fn new(method: Method, entries: Vec<(String, f64)>) -> Self {
        Self {
            method,
            entries,
            weight: 0.0,
        }
    }

    /// Sorts `scored` by score descending, ties by id ascending, keeping `top_k`.
    pub fn from_scores(method: Method, mut scored: Vec<(String, f64)>, top_k: usize) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(top_k);
        Self::new(method, scored)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn default_w_dense() -> f64 {
    0.5
}
fn default_w_sparse() -> f64 {
    0.3
}
fn default_w_online() -> f64 {
    0.2
}
fn default_k() -> f64 {
    60.0
}
fn default_top_k() -> usize {
    5
}
fn default_candidates() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default = "default_w_dense")]
    pub w_dense: f64,
    #[serde(default = "default_w_sparse")]
    pub w_sparse: f64,
    #[serde(default = "default_w_online")]
    pub w_online: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_top_k")]
    pub top_k_per_expert: usize,
    /// How many hits each method contributes to fusion.
    #[serde(default = "default_candidates")]
    pub candidates_per_method: usize,
    /// Chunks kept per source for the judge.
    #[serde(default = "default_top_k")]
    pub cross_source_top_k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            w_dense: default_w_dense(),
            w_sparse: default_w_sparse(),
            w_online: default_w_online(),
            k: default_k(),
            top_k_per_expert: default_top_k(),
            candidates_per_method: default_candidates(),
            cross_source_top_k: default_top_k(),
        }
    }
}

impl FusionConfig {
    pub fn weight(&self, method: Method) -> f64 {
        match method {
            Method::Dense => self.w_dense,
            Method::Sparse => self.w_sparse,
            Method::Online => self.w_online,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_dense, self.w_sparse, self.w_online];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("fusion weights must be finite and >= 0, got {weights:?}")));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Config(format!("fusion k must be > 0, got {}", self.k)));
        }
        if self.top_k_per_expert == 0 || self.candidates_per_method == 0 || self.cross_source_top_k == 0 {
            return Err(Error::Config(
                "top_k_per_expert, candidates_per_method and cross_source_top_k must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedResult {
    pub chunk_id: String,
    pub rrf_score: f64,
    /// 1-based rank of the chunk in each list that contains it.
    pub contributions: Vec<(Method, usize)>,
}

fn sort_fused(results: &mut [FusedResult]) {
    results.sort_by(|a, b| b.rrf_score.total_cmp(&a.rrf_score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
}

/// Weighted RRF using each list's own `weight`; lists may repeat a method.
///
/// A chunk listed twice in one list counts at its best rank only.
pub fn fuse_weighted(lists: &[RankedList], k: f64) -> Vec<FusedResult> {
    let mut acc: BTreeMap<&str, FusedResult> = BTreeMap::new();
    for list in lists {
        let mut seen = HashSet::new();
        for (i, (id, _)) in list.entries.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                continue;
            }
            let rank = i + 1;
            let entry = acc.entry(id.as_str()).or_insert_with(|| FusedResult {
                chunk_id: id.clone(),
                rrf_score: 0.0,
                contributions: Vec::new(),
            });
            entry.rrf_score += list.weight / (k + rank as f64);
            entry.contributions.push((list.method, rank));
        }
    }
    let mut out: Vec<FusedResult> = acc.into_values().collect();
    sort_fused(&mut out);
    out
}

/// Weighted RRF with per-method weights from `config`; each method at most once.
pub fn fuse_rrf(lists: &[RankedList], config: &FusionConfig) -> Result<Vec<FusedResult>> {
    let mut methods = HashSet::new();
    let weighted: Vec<RankedList> = lists
        .iter()
        .map(|l| {
            if !methods.insert(l.method) {
                return Err(Error::DuplicateMethod(l.method.to_string()));
            }
            Ok(RankedList {
                weight: config.weight(l.method),
                ..l.clone()
            })
        })
        .collect::<Result<_>>()?;
    Ok(fuse_weighted(&weighted, config.k))
}

/// Keeps the best-scoring entry per fingerprint, preserving relative order.
pub fn dedup(results: Vec<FusedResult>, fingerprints: &HashMap<String, String>) -> Result<Vec<FusedResult>> {
    let mut best: HashMap<&str, usize> = HashMap::new();
    for (i, r) in results.iter().enumerate() {
        let fp = fingerprints
            .get(&r.chunk_id)
            .ok_or_else(|| Error::UnknownChunk(r.chunk_id.clone()))?;
        match best.get(fp.as_str()) {
            Some(&j) if results[j].rrf_score >= r.rrf_score => {}
            _ => {
                best.insert(fp, i);
            }
        }
    }
    let keep: HashSet<usize> = best.into_values().collect();
    Ok(results
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, r)| r)
        .collect())
}

/// Merges per-sub-query fusions by taking each chunk's maximum score.
pub fn max_merge(per_query: Vec<Vec<FusedResult>>) -> Vec<FusedResult> {
    let mut best: BTreeMap<String, FusedResult> = BTreeMap::new();
    for r in per_query.into_iter().flatten() {
        match best.get(&r.chunk_id) {
            Some(b) if b.rrf_score >= r.rrf_score => {}
            _ => {
                best.insert(r.chunk_id.clone(), r);
            }
        }
    }
    let mut out: Vec<FusedResult> = best.into_values().collect();
    sort_fused(&mut out);
    out
}
