use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{Method, RankedList};
use crate::text::tokenize;

fn default_k1() -> f64 {
    1.5
}

fn default_b() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: default_k1(),
            b: default_b(),
        }
    }
}

/// Okapi BM25 over an inverted index.
///
/// `idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))`, which stays positive for
/// terms present in most documents. Query tokens are summed with repetition.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    name: String,
    params: Bm25Params,
    ids: Vec<String>,
    doc_len: Vec<usize>,
    avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build<'a>(
        name: impl Into<String>,
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        params: Bm25Params,
    ) -> Self {
        let mut ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (i, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i, count));
            }
            ids.push(id.to_string());
            doc_len.push(tokens.len());
        }
        let avg_len = if ids.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / ids.len() as f64
        };
        Self {
            name: name.into(),
            params,
            ids,
            doc_len,
            avg_len,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let total = self.ids.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Scores of every document matching at least one query token.
    pub fn scores(&self, query: &str) -> Result<Vec<(String, f64)>> {
        if self.ids.is_empty() {
            return Err(Error::EmptyIndex(self.name.clone()));
        }
        let Bm25Params { k1, b } = self.params;
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = if self.avg_len > 0.0 {
                    1.0 - b + b * self.doc_len[doc] as f64 / self.avg_len
                } else {
                    1.0
                };
                *acc.entry(doc).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        Ok(acc.into_iter().map(|(doc, s)| (self.ids[doc].clone(), s)).collect())
    }

    pub fn search(&self, query: &str, top_k: usize) -> Result<RankedList> {
        Ok(RankedList::from_scores(Method::Sparse, self.scores(query)?, top_k))
    }
}
