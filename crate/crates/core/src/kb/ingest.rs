use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::kb::{chunk_document, fingerprint, ChunkingPolicy, Collection, EvidenceChunk, Source};

/// Name of the optional per-directory category mapping file.
pub const CATEGORY_SIDECAR: &str = "categories.json";

/// How category tags are assigned to ingested documents.
///
/// Tags come from three places, merged: the directory components between the
/// input root and the file (when `directory_tags` is set), the sidecar map keyed
/// by document id, and a `category` field on line-delimited records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryMap {
    #[serde(default = "default_true")]
    pub directory_tags: bool,
    #[serde(default)]
    pub documents: BTreeMap<String, Vec<String>>,
}

fn default_true() -> bool {
    true
}

impl CategoryMap {
    pub fn directory_convention() -> Self {
        Self {
            directory_tags: true,
            documents: BTreeMap::new(),
        }
    }

    /// Reads `categories.json` from `dir` if present, else the directory convention.
    pub fn from_sidecar(dir: &Path) -> Result<Self> {
        let path = dir.join(CATEGORY_SIDECAR);
        if !path.exists() {
            return Ok(Self::directory_convention());
        }
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
    }

    fn tags_for(&self, doc_id: &str, dirs: &[String], record_tags: &[String]) -> BTreeSet<String> {
        let mut tags = BTreeSet::new();
        if self.directory_tags {
            tags.extend(dirs.iter().cloned());
        }
        if let Some(extra) = self.documents.get(doc_id) {
            tags.extend(extra.iter().cloned());
        }
        tags.extend(record_tags.iter().cloned());
        tags
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnUnreadable {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub on_unreadable: OnUnreadable,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub collection: Collection,
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    category: Option<RecordCategory>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RecordCategory {
    One(String),
    Many(Vec<String>),
}

struct RawDocument {
    id: String,
    text: String,
    dirs: Vec<String>,
    tags: Vec<String>,
}

/// Chunks every document under `input` into a new collection for `source`.
///
/// Plain-text files (`.txt`, `.md`) are one document each, identified by their
/// relative path without extension. `.jsonl` files hold one
/// `{"id", "text", "category"?}` record per line. Files are visited in sorted
/// order so chunk ids are stable across runs.
pub fn ingest_collection(
    input: &Path,
    source: Source,
    policy: ChunkingPolicy,
    categories: &CategoryMap,
    options: IngestOptions,
) -> Result<IngestReport> {
    if source == Source::Online {
        return Err(Error::Config(
            "ONLINE is reserved for live passages and cannot back a collection".into(),
        ));
    }
    policy.validate()?;
    if !input.is_dir() {
        return Err(Error::io(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input directory does not exist"),
        ));
    }

    let mut skipped = Vec::new();
    let mut documents = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::UnreadableFile {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| input.to_path_buf()),
            reason: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let rel = path.strip_prefix(input).unwrap_or(path);
        let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with('.') || name == CATEGORY_SIDECAR {
            continue;
        }
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        if !matches!(ext, "txt" | "md" | "jsonl") {
            continue;
        }
        match read_documents(path, rel, ext) {
            Ok(docs) => documents.extend(docs),
            Err(reason) => match options.on_unreadable {
                OnUnreadable::Abort => {
                    return Err(Error::UnreadableFile {
                        path: path.to_path_buf(),
                        reason,
                    })
                }
                OnUnreadable::Skip => {
                    warn!(path = %path.display(), %reason, "skipping unreadable file");
                    skipped.push((path.to_path_buf(), reason));
                }
            },
        }
    }
    if documents.is_empty() {
        return Err(Error::NoDocuments(input.to_path_buf()));
    }

    let mut seen = BTreeSet::new();
    let mut collection = Collection::new(source.collection_name(), source, policy);
    for doc in documents {
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateDocument(doc.id));
        }
        let category = categories.tags_for(&doc.id, &doc.dirs, &doc.tags);
        let pieces = match chunk_document(&doc.text, &policy) {
            Ok(pieces) => pieces,
            Err(Error::EmptyDocument) => {
                skipped.push((PathBuf::from(&doc.id), "empty document".into()));
                continue;
            }
            Err(e) => return Err(e),
        };
        for (index, piece) in pieces.into_iter().enumerate() {
            collection.push(EvidenceChunk {
                chunk_id: format!("{}:{}:{:04}", source.collection_name(), doc.id, index),
                fingerprint: fingerprint(&piece.text),
                text: piece.text,
                source,
                category: category.clone(),
                origin_doc: doc.id.clone(),
                fetched_for: None,
            })?;
        }
    }
    if collection.is_empty() {
        return Err(Error::NoDocuments(input.to_path_buf()));
    }
    Ok(IngestReport {
        collection,
        skipped,
    })
}

fn read_documents(path: &Path, rel: &Path, ext: &str) -> std::result::Result<Vec<RawDocument>, String> {
    let raw = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let dirs: Vec<String> = rel
        .parent()
        .map(|p| {
            p.components()
                .filter_map(|c| c.as_os_str().to_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();

    if ext == "jsonl" {
        let mut docs = Vec::new();
        for (line_no, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: RawRecord = serde_json::from_str(line)
                .map_err(|e| format!("line {}: {e}", line_no + 1))?;
            let tags = match record.category {
                None => Vec::new(),
                Some(RecordCategory::One(t)) => vec![t],
                Some(RecordCategory::Many(ts)) => ts,
            };
            docs.push(RawDocument {
                id: record.id,
                text: record.text,
                dirs: dirs.clone(),
                tags,
            });
        }
        return Ok(docs);
    }

    let id = rel
        .with_extension("")
        .components()
        .filter_map(|c| c.as_os_str().to_str())
        .collect::<Vec<_>>()
        .join("/");
    Ok(vec![RawDocument {
        id,
        text: raw,
        dirs,
        tags: Vec::new(),
    }])
}
