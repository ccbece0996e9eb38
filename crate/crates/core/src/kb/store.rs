//! On-disk layout: `<root>/<collection>/manifest.json`, `chunks.jsonl` and an
//! optional `embeddings.jsonl` holding precomputed dense vectors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{ChunkingPolicy, Collection, CollectionStats, EvidenceChunk, Source};

pub const KB_SCHEMA_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const CHUNKS: &str = "chunks.jsonl";
const EMBEDDINGS: &str = "embeddings.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingInfo {
    pub model: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub source: Source,
    pub policy: ChunkingPolicy,
    pub counts: CollectionStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingInfo>,
}

/// Dense vectors aligned with a collection's chunk order.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEmbedding {
    pub model: String,
    pub dimension: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    chunk_id: String,
    vector: Vec<f32>,
}

/// The two offline collections plus any stored embeddings.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    mayo: Collection,
    webmd: Collection,
    embeddings: BTreeMap<Source, StoredEmbedding>,
}

impl KnowledgeBase {
    pub fn new(mayo: Collection, webmd: Collection) -> Result<Self> {
        for (c, expected) in [(&mayo, Source::Mayo), (&webmd, Source::Webmd)] {
            if c.source() != expected {
                return Err(Error::Config(format!(
                    "collection `{}` has source {} but is bound to {expected}",
                    c.name(),
                    c.source()
                )));
            }
        }
        Ok(Self {
            mayo,
            webmd,
            embeddings: BTreeMap::new(),
        })
    }

    pub fn collection(&self, source: Source) -> &Collection {
        match source {
            Source::Mayo => &self.mayo,
            Source::Webmd => &self.webmd,
            Source::Online => panic!("there is no offline ONLINE collection"),
        }
    }

    pub fn embeddings(&self, source: Source) -> Option<&StoredEmbedding> {
        self.embeddings.get(&source)
    }

    pub fn set_embeddings(&mut self, source: Source, stored: StoredEmbedding) -> Result<()> {
        let collection = self.collection(source);
        if stored.vectors.len() != collection.len() {
            return Err(Error::Config(format!(
                "{} vectors supplied for {} chunks in `{}`",
                stored.vectors.len(),
                collection.len(),
                collection.name()
            )));
        }
        if let Some(bad) = stored.vectors.iter().find(|v| v.len() != stored.dimension) {
            return Err(Error::DimensionMismatch {
                expected: stored.dimension,
                found: bad.len(),
            });
        }
        self.embeddings.insert(source, stored);
        Ok(())
    }

    pub fn exists(root: &Path) -> bool {
        [Source::Mayo, Source::Webmd]
            .iter()
            .any(|s| root.join(s.collection_name()).join(MANIFEST).exists())
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        for source in [Source::Mayo, Source::Webmd] {
            write_collection(root, self.collection(source), self.embeddings.get(&source))?;
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        if !Self::exists(root) {
            return Err(Error::KbMissing(root.to_path_buf()));
        }
        let (mayo, mayo_emb) = read_collection(&root.join(Source::Mayo.collection_name()))?;
        let (webmd, webmd_emb) = read_collection(&root.join(Source::Webmd.collection_name()))?;
        let mut kb = Self::new(mayo, webmd)?;
        if let Some(e) = mayo_emb {
            kb.set_embeddings(Source::Mayo, e)?;
        }
        if let Some(e) = webmd_emb {
            kb.set_embeddings(Source::Webmd, e)?;
        }
        Ok(kb)
    }
}

fn write_collection(root: &Path, collection: &Collection, embedding: Option<&StoredEmbedding>) -> Result<()> {
    let dir = root.join(collection.name());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let manifest = Manifest {
        schema_version: KB_SCHEMA_VERSION,
        name: collection.name().to_string(),
        source: collection.source(),
        policy: collection.policy(),
        counts: collection.stats(),
        embedding: embedding.map(|e| EmbeddingInfo {
            model: e.model.clone(),
            dimension: e.dimension,
        }),
    };
    let manifest_path = dir.join(MANIFEST);
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(&manifest_path, body).map_err(|e| Error::io(&manifest_path, e))?;

    write_lines(&dir.join(CHUNKS), collection.chunks().iter())?;

    let emb_path = dir.join(EMBEDDINGS);
    match embedding {
        Some(e) => write_lines(
            &emb_path,
            collection
                .chunks()
                .iter()
                .zip(&e.vectors)
                .map(|(c, v)| EmbeddingRecord {
                    chunk_id: c.chunk_id.clone(),
                    vector: v.clone(),
                }),
        )?,
        None => {
            if emb_path.exists() {
                fs::remove_file(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
            }
        }
    }
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_collection(dir: &Path) -> Result<(Collection, Option<StoredEmbedding>)> {
    let manifest_path = dir.join(MANIFEST);
    let raw = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&raw)
        .map_err(|e| Error::schema(manifest_path.display().to_string(), e.to_string()))?;
    if manifest.schema_version != KB_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            context: manifest_path.display().to_string(),
            found: manifest.schema_version,
            expected: KB_SCHEMA_VERSION,
        });
    }

    let mut collection = Collection::new(manifest.name.clone(), manifest.source, manifest.policy);
    for chunk in read_lines::<EvidenceChunk>(&dir.join(CHUNKS))? {
        collection.push(chunk)?;
    }
    if collection.len() != manifest.counts.chunks {
        return Err(Error::schema(
            manifest_path.display().to_string(),
            format!(
                "manifest lists {} chunks but {} were read",
                manifest.counts.chunks,
                collection.len()
            ),
        ));
    }

    let embedding = match manifest.embedding {
        None => None,
        Some(info) => {
            let records = read_lines::<EmbeddingRecord>(&dir.join(EMBEDDINGS))?;
            let aligned = records.len() == collection.len()
                && records
                    .iter()
                    .zip(collection.chunks())
                    .all(|(r, c)| r.chunk_id == c.chunk_id);
            if !aligned {
                return Err(Error::schema(
                    dir.join(EMBEDDINGS).display().to_string(),
                    "embedding records are not aligned with chunks",
                ));
            }
            Some(StoredEmbedding {
                model: info.model,
                dimension: info.dimension,
                vectors: records.into_iter().map(|r| r.vector).collect(),
            })
        }
    };
    Ok((collection, embedding))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::schema(format!("{} line {}", path.display(), i + 1), e.to_string())
        })?;
        out.push(item);
    }
    Ok(out)
}
