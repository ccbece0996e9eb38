use crate::error::{Error, Result};
use crate::llm::cosine_similarity;
use crate::retrieval::{Method, RankedList};

/// Exact full-scan cosine index.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    name: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    dimension: usize,
}

impl DenseIndex {
    pub fn new(name: impl Into<String>, ids: Vec<String>, vectors: Vec<Vec<f32>>) -> Result<Self> {
        let name = name.into();
        if ids.len() != vectors.len() {
            return Err(Error::Config(format!(
                "dense index `{name}`: {} ids but {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let dimension = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().find(|v| v.len() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: bad.len(),
            });
        }
        Ok(Self {
            name,
            ids,
            vectors,
            dimension,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn search(&self, query: &[f32], top_k: usize) -> Result<RankedList> {
        if self.ids.is_empty() {
            return Err(Error::EmptyIndex(self.name.clone()));
        }
        if query.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let scored = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.clone(), cosine_similarity(query, v)))
            .collect();
        Ok(RankedList::from_scores(Method::Dense, scored, top_k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vector_ranks_first_with_unit_score() {
        let idx = DenseIndex::new(
            "t",
            vec!["a".into(), "b".into()],
            vec![vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let hits = idx.search(&[0.6, 0.8, 0.0], 5).unwrap();
        assert_eq!(hits.entries[0].0, "a");
        assert!((hits.entries[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_query_ties_break_by_id() {
        let idx = DenseIndex::new("t", vec!["b".into(), "a".into()], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let hits = idx.search(&[0.0, 0.0, 1.0], 5).unwrap();
        assert_eq!(hits.entries, vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn errors() {
        let empty = DenseIndex::new("e", vec![], vec![]).unwrap();
        assert!(matches!(empty.search(&[1.0], 1), Err(Error::EmptyIndex(_))));
        let idx = DenseIndex::new("t", vec!["a".into()], vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(idx.search(&[1.0], 1), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }
}
