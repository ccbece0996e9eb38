use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::llm::http::{OpenAiSettings, ProviderClient};
use crate::llm::ProviderFailure;
use crate::text::tokenize;

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

/// Cosine similarity in `f64`; zero vectors score 0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Seeded feature-hashing embedder: each token adds ±1 to one bucket, then the
/// vector is L2-normalized. Fully deterministic and local.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
    id: String,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            seed,
            id: format!("hash-{dimension}-{seed}"),
        }
    }

    fn hash(&self, token: &str) -> u64 {
        // FNV-1a over the seed bytes followed by the token.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256, 7)
    }
}

impl Embedder for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if text.trim().is_empty() {
            return Err(Error::Embedding("cannot embed empty text".into()));
        }
        let mut v = vec![0.0f64; self.dimension];
        for token in tokenize(text) {
            let h = self.hash(&token);
            let bucket = (h % self.dimension as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(v.into_iter()
            .map(|x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 })
            .collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct OpenAiEmbedder {
    client: ProviderClient,
}

impl OpenAiEmbedder {
    pub fn new(settings: OpenAiSettings) -> Result<Self> {
        Ok(Self {
            client: ProviderClient::new(settings)?,
        })
    }
}

impl Embedder for OpenAiEmbedder {
    fn model_id(&self) -> &str {
        &self.client.settings.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if text.trim().is_empty() {
            return Err(Error::Embedding("cannot embed empty text".into()));
        }
        let body = serde_json::json!({ "model": self.client.settings.model, "input": text });
        let mut last = String::new();
        for _ in 0..=self.client.settings.max_retries {
            match self.client.post("embeddings", &body) {
                Ok(value) => {
                    let vector = value["data"][0]["embedding"]
                        .as_array()
                        .ok_or_else(|| Error::Embedding("response has no data[0].embedding".into()))?
                        .iter()
                        .map(|x| x.as_f64().map(|f| f as f32))
                        .collect::<Option<Vec<f32>>>()
                        .ok_or_else(|| Error::Embedding("non-numeric embedding component".into()))?;
                    return Ok(vector);
                }
                Err(ProviderFailure::Transient(m)) => last = m,
                Err(ProviderFailure::Fatal(m)) => return Err(Error::Embedding(m)),
            }
        }
        Err(Error::Embedding(last))
    }
}

/// Caching front for an [`Embedder`] that pins the dimension of the first
/// vector and rejects any later change.
pub struct EmbeddingService {
    inner: Arc<dyn Embedder>,
    cache: Mutex<HashMap<String, Vec<f32>>>,
    dimension: OnceLock<usize>,
    calls: AtomicUsize,
}

impl EmbeddingService {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            dimension: OnceLock::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    /// Number of requests served, cached or not.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if text.trim().is_empty() {
            return Err(Error::Embedding("cannot embed empty text".into()));
        }
        if let Some(v) = self.cache.lock().expect("embedding cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.check_dimension(v.len())?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }

    /// Accepts externally produced vectors (e.g. loaded from the knowledge base)
    /// under the same dimension contract.
    pub fn check_dimension(&self, found: usize) -> Result<()> {
        let expected = *self.dimension.get_or_init(|| found);
        if expected != found {
            return Err(Error::DimensionMismatch { expected, found });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic_and_normalized() {
        let e = HashEmbedder::default();
        let a = e.embed("fever and cough").unwrap();
        assert_eq!(a, e.embed("fever and cough").unwrap());
        assert_eq!(a.len(), 256);
        let norm: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distinct_texts_are_not_collinear() {
        let e = HashEmbedder::default();
        let a = e.embed("atrial fibrillation anticoagulation").unwrap();
        let b = e.embed("streptococcal pharyngitis amoxicillin").unwrap();
        assert!(cosine_similarity(&a, &b) < 1.0);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(HashEmbedder::default().embed("  ").is_err());
        let svc = EmbeddingService::new(Arc::new(HashEmbedder::default()));
        assert!(svc.embed("").is_err());
    }

    #[test]
    fn cosine_of_identical_and_orthogonal_vectors() {
        assert!((cosine_similarity(&[0.3, 0.4], &[0.3, 0.4]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    struct Shifting(AtomicUsize);

    impl Embedder for Shifting {
        fn model_id(&self) -> &str {
            "shifting"
        }

        fn embed(&self, _text: &str) -> Result<Vec<f32>> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(vec![1.0; 4 + n])
        }
    }

    #[test]
    fn dimension_change_mid_run_is_an_error() {
        let svc = EmbeddingService::new(Arc::new(Shifting(AtomicUsize::new(0))));
        svc.embed("one").unwrap();
        assert!(svc.embed("one").is_ok(), "cached");
        assert!(matches!(svc.embed("two"), Err(Error::DimensionMismatch { expected: 4, found: 5 })));
    }
}
