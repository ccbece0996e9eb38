use crate::error::{Error, Result};
use crate::kb::ChunkingPolicy;
use crate::text::normalize_whitespace;

/// A window of the normalized document. `start` is a character offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentChunk {
    pub start: usize,
    pub text: String,
}

/// Splits a document into fixed-size character windows.
///
/// Windows start at every multiple of `chunk_size - overlap` that lies inside
/// the normalized document and run for at most `chunk_size` characters.
pub fn chunk_document(doc: &str, policy: &ChunkingPolicy) -> Result<Vec<DocumentChunk>> {
    policy.validate()?;
    let normalized = normalize_whitespace(doc);
    if normalized.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let chars: Vec<char> = normalized.chars().collect();
    let chunks = (0..chars.len())
        .step_by(policy.stride())
        .map(|start| {
            let end = (start + policy.chunk_size).min(chars.len());
            DocumentChunk {
                start,
                text: chars[start..end].iter().collect(),
            }
        })
        .collect();
    Ok(chunks)
}
