//! Live passage fetching. Failures never abort a note: they turn into an
//! empty ranked list plus a warning.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::error::{Error, Result};
use crate::kb::{chunk_document, fingerprint, ChunkingPolicy, EvidenceChunk, Source};
use crate::retrieval::{Method, RankedList};
use crate::text::normalize_term;

pub const FIXTURE_FETCHER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlinePassage {
    pub url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("network error: {0}")]
    Network(String),
}

pub trait OnlineFetcher: Send + Sync {
    /// Up to `max` passages for `query` from `site` (MAYO or WEBMD), best first.
    fn fetch(&self, query: &str, site: Source, max: usize) -> std::result::Result<Vec<OnlinePassage>, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureEntry {
    site: Source,
    query: String,
    #[serde(default)]
    passages: Vec<OnlinePassage>,
    /// `"timeout"` or any other message (treated as a network error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    version: u32,
    entries: Vec<FixtureEntry>,
}

/// Fetcher backed by a JSON mapping from (site, query) to passages.
/// Queries are matched case-insensitively after whitespace normalization;
/// unknown queries return no passages.
#[derive(Debug, Clone, Default)]
pub struct FixtureFetcher {
    entries: Vec<FixtureEntry>,
}

impl FixtureFetcher {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw).map_err(|e| match e {
            Error::Schema { message, .. } => Error::schema(path.display().to_string(), message),
            Error::SchemaVersion { found, expected, .. } => Error::SchemaVersion {
                context: path.display().to_string(),
                found,
                expected,
            },
            other => other,
        })
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let file: FixtureFile = serde_json::from_str(raw).map_err(|e| Error::schema("online fixture", e.to_string()))?;
        if file.version != FIXTURE_FETCHER_VERSION {
            return Err(Error::SchemaVersion {
                context: "online fixture".into(),
                found: file.version,
                expected: FIXTURE_FETCHER_VERSION,
            });
        }
        Ok(Self { entries: file.entries })
    }

    pub fn insert(&mut self, site: Source, query: &str, passages: Vec<OnlinePassage>) {
        self.entries.push(FixtureEntry {
            site,
            query: query.to_string(),
            passages,
            error: None,
        });
    }

    pub fn insert_error(&mut self, site: Source, query: &str, error: &str) {
        self.entries.push(FixtureEntry {
            site,
            query: query.to_string(),
            passages: Vec::new(),
            error: Some(error.to_string()),
        });
    }
}

impl OnlineFetcher for FixtureFetcher {
    fn fetch(&self, query: &str, site: Source, max: usize) -> std::result::Result<Vec<OnlinePassage>, FetchError> {
        let wanted = normalize_term(query);
        let Some(entry) = self
            .entries
            .iter()
            .find(|e| e.site == site && normalize_term(&e.query) == wanted)
        else {
            return Ok(Vec::new());
        };
        match entry.error.as_deref() {
            Some("timeout") => Err(FetchError::Timeout(format!("fixture timeout for `{query}`"))),
            Some(other) => Err(FetchError::Network(other.to_string())),
            None => Ok(entry.passages.iter().take(max).cloned().collect()),
        }
    }
}

fn default_fetch_timeout() -> u64 {
    10
}

fn default_max_pages() -> usize {
    3
}

fn default_user_agent() -> String {
    concat!("bluemed/", env!("CARGO_PKG_VERSION")).to_string()
}

/// Live fetcher settings. Search URLs contain a `{query}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetcherSettings {
    pub mayo_search_url: String,
    pub webmd_search_url: String,
    #[serde(default = "default_fetch_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_pages")]
    pub max_pages: usize,
    #[serde(default = "default_user_agent")]
    pub user_agent: String,
}

impl Default for FetcherSettings {
    fn default() -> Self {
        Self {
            mayo_search_url: "https://www.mayoclinic.org/search/search-results?q={query}".into(),
            webmd_search_url: "https://www.webmd.com/search/search_results/default.aspx?query={query}".into(),
            timeout_secs: default_fetch_timeout(),
            max_pages: default_max_pages(),
            user_agent: default_user_agent(),
        }
    }
}

static HREF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"href\s*=\s*["']([^"'#]+)["']"#).unwrap());
static SCRIPT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<(script|style|noscript)[^>]*>.*?</(script|style|noscript)>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static PARAGRAPH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<p[^>]*>(.*?)</p>").unwrap());

fn html_to_text(html: &str) -> String {
    let body = SCRIPT.replace_all(html, " ");
    let paragraphs: Vec<String> = PARAGRAPH
        .captures_iter(&body)
        .map(|c| TAG.replace_all(&c[1], " ").into_owned())
        .collect();
    let text = if paragraphs.is_empty() {
        TAG.replace_all(&body, " ").into_owned()
    } else {
        paragraphs.join("\n")
    };
    text.replace("&amp;", "&")
        .replace("&nbsp;", " ")
        .replace("&#39;", "'")
        .replace("&quot;", "\"")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Searches the site and returns the plain text of the top result pages.
pub struct HttpFetcher {
    settings: FetcherSettings,
    agent: ureq::Agent,
}

impl HttpFetcher {
    pub fn new(settings: FetcherSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .user_agent(settings.user_agent.as_str())
            .build()
            .into();
        Self { settings, agent }
    }

    fn get(&self, url: &str) -> std::result::Result<String, FetchError> {
        let mut response = self.agent.get(url).call().map_err(|e| match e {
            ureq::Error::Timeout(_) => FetchError::Timeout(url.to_string()),
            other => FetchError::Network(format!("{url}: {other}")),
        })?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Network(format!("{url}: {e}")))
    }
}

impl OnlineFetcher for HttpFetcher {
    fn fetch(&self, query: &str, site: Source, max: usize) -> std::result::Result<Vec<OnlinePassage>, FetchError> {
        let template = match site {
            Source::Mayo => &self.settings.mayo_search_url,
            Source::Webmd => &self.settings.webmd_search_url,
            Source::Online => return Ok(Vec::new()),
        };
        let encoded: String = url::form_urlencoded::byte_serialize(query.as_bytes()).collect();
        let search_url = template.replace("{query}", &encoded);
        let base = url::Url::parse(&search_url).map_err(|e| FetchError::Network(format!("{search_url}: {e}")))?;
        let listing = self.get(&search_url)?;
        let mut seen = BTreeSet::new();
        let links: Vec<url::Url> = HREF
            .captures_iter(&listing)
            .filter_map(|c| base.join(&c[1]).ok())
            .filter(|u| u.host_str() == base.host_str() && u.path() != base.path())
            .filter(|u| seen.insert(u.as_str().to_string()))
            .take(max.min(self.settings.max_pages))
            .collect();
        let mut passages = Vec::new();
        for link in links {
            match self.get(link.as_str()) {
                Ok(html) => {
                    let text = html_to_text(&html);
                    if !text.is_empty() {
                        passages.push(OnlinePassage {
                            url: link.to_string(),
                            text,
                        });
                    }
                }
                Err(e) => warn!(url = %link, error = %e, "skipping online page"),
            }
        }
        Ok(passages)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineResult {
    pub list: RankedList,
    pub chunks: Vec<EvidenceChunk>,
    pub warning: Option<String>,
}

fn url_key(url: &str) -> String {
    hex::encode(&Sha256::digest(url.as_bytes())[..6])
}

/// Fetches live passages for one query and turns them into ONLINE chunks.
///
/// Passages are chunked with `policy` so they dedup against offline chunks.
/// The ranked list scores chunks `1/position` in fetch order.
pub fn online_search(
    fetcher: &dyn OnlineFetcher,
    query: &str,
    site: Source,
    top_k: usize,
    policy: &ChunkingPolicy,
) -> OnlineResult {
    let passages = match fetcher.fetch(query, site, top_k) {
        Ok(p) => p,
        Err(e) => {
            let message = format!("online search for {site} failed ({e}); continuing without online evidence");
            warn!("{message}");
            return OnlineResult {
                list: RankedList::new(Method::Online, Vec::new()),
                chunks: Vec::new(),
                warning: Some(message),
            };
        }
    };
    let mut chunks = Vec::new();
    for passage in passages {
        let Ok(pieces) = chunk_document(&passage.text, policy) else { continue };
        let key = url_key(&passage.url);
        for (i, piece) in pieces.into_iter().enumerate() {
            chunks.push(EvidenceChunk {
                chunk_id: format!("online:{}:{key}:{i:04}", site.collection_name()),
                fingerprint: fingerprint(&piece.text),
                text: piece.text,
                source: Source::Online,
                category: BTreeSet::from(["online".to_string()]),
                origin_doc: passage.url.clone(),
                fetched_for: Some(site),
            });
        }
    }
    // Two passages from the same URL would collide on ids; keep the first.
    let mut ids = BTreeSet::new();
    chunks.retain(|c| ids.insert(c.chunk_id.clone()));
    chunks.truncate(top_k);
    let entries = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| (c.chunk_id.clone(), 1.0 / (i + 1) as f64))
        .collect();
    OnlineResult {
        list: RankedList::new(Method::Online, entries),
        chunks,
        warning: None,
    }
}
