//! Source-labelled chunk collections.
//!
//! Documents are whitespace-normalized, split into fixed-size overlapping
//! character windows and stored with a content fingerprint so that
//! deduplication after fusion never needs to recompute digests.

mod chunking;
mod ingest;
mod store;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::{estimate_tokens, normalize_whitespace};

pub use chunking::{chunk_document, DocumentChunk};
pub use ingest::{ingest_collection, CategoryMap, IngestOptions, IngestReport, OnUnreadable};
pub use store::{EmbeddingInfo, KnowledgeBase, Manifest, StoredEmbedding, KB_SCHEMA_VERSION};

/// Number of leading characters hashed into a chunk fingerprint.
pub const FINGERPRINT_PREFIX_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Mayo,
    Webmd,
    Online,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Mayo => "MAYO",
            Source::Webmd => "WEBMD",
            Source::Online => "ONLINE",
        }
    }

    /// Directory name used for the offline collection of this source.
    pub fn collection_name(self) -> &'static str {
        match self {
            Source::Mayo => "mayo",
            Source::Webmd => "webmd",
            Source::Online => "online",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MAYO" => Ok(Source::Mayo),
            "WEBMD" => Ok(Source::Webmd),
            "ONLINE" => Ok(Source::Online),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// One indexed document fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceChunk {
    pub chunk_id: String,
    pub text: String,
    pub source: Source,
    pub category: BTreeSet<String>,
    pub origin_doc: String,
    pub fingerprint: String,
    /// For `ONLINE` chunks, the site whose live pages produced the passage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_for: Option<Source>,
}

impl EvidenceChunk {
    /// The offline partition this chunk belongs to: its own source for
    /// collection chunks, the fetched site for live passages.
    pub fn partition(&self) -> Option<Source> {
        match self.source {
            Source::Online => self.fetched_for,
            s => Some(s),
        }
    }
}

/// Digest of the whitespace-normalized first 200 characters.
///
/// Returns a 128-bit hex string. Texts sharing that normalized prefix map to
/// the same fingerprint.
pub fn fingerprint(text: &str) -> String {
    let normalized = normalize_whitespace(text);
    let prefix: String = normalized.chars().take(FINGERPRINT_PREFIX_CHARS).collect();
    let digest = Sha256::digest(prefix.as_bytes());
    hex::encode(&digest[..16])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingPolicy {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl ChunkingPolicy {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self> {
        let policy = Self {
            chunk_size,
            overlap,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::InvalidPolicy("chunk_size must be positive".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::InvalidPolicy(format!(
                "overlap {} must be smaller than chunk_size {}",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

impl Default for ChunkingPolicy {
    fn default() -> Self {
        Self {
            chunk_size: 1000,
            overlap: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub documents: usize,
    pub chunks: usize,
    pub token_estimate: usize,
}

/// An ordered, single-source list of chunks.
#[derive(Debug, Clone)]
pub struct Collection {
    name: String,
    source: Source,
    policy: ChunkingPolicy,
    chunks: Vec<EvidenceChunk>,
    ids: HashSet<String>,
    documents: BTreeSet<String>,
}

impl Collection {
    pub fn new(name: impl Into<String>, source: Source, policy: ChunkingPolicy) -> Self {
        Self {
            name: name.into(),
            source,
            policy,
            chunks: Vec::new(),
            ids: HashSet::new(),
            documents: BTreeSet::new(),
        }
    }

    /// Appends a chunk, rejecting foreign sources and repeated ids.
    pub fn push(&mut self, chunk: EvidenceChunk) -> Result<()> {
        if chunk.source != self.source {
            return Err(Error::SourceMismatch {
                chunk_id: chunk.chunk_id,
                collection: self.name.clone(),
                expected: self.source.to_string(),
                found: chunk.source.to_string(),
            });
        }
        if chunk.text.is_empty() {
            return Err(Error::EmptyDocument);
        }
        if !self.ids.insert(chunk.chunk_id.clone()) {
            return Err(Error::DuplicateChunk(chunk.chunk_id));
        }
        self.documents.insert(chunk.origin_doc.clone());
        self.chunks.push(chunk);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn policy(&self) -> ChunkingPolicy {
        self.policy
    }

    pub fn chunks(&self) -> &[EvidenceChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn stats(&self) -> CollectionStats {
        CollectionStats {
            documents: self.documents.len(),
            chunks: self.chunks.len(),
            token_estimate: self.chunks.iter().map(|c| estimate_tokens(&c.text)).sum(),
        }
    }
}
