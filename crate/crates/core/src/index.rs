//! Exhaustive cosine-similarity index.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector, EncoderDescriptor};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ScoredHit<S = f64> {
    pub record_id: String,
    pub score: S,
}

/// Immutable linear-scan index. Stored ids keep insertion order.
#[derive(Debug, Clone)]
pub struct VectorIndex<S = f64> {
    encoder: EncoderDescriptor,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector<S>>,
}

impl<S: Scalar> VectorIndex<S> {
    pub fn build<I>(encoder: EncoderDescriptor, records: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (String, EmbeddingVector<S>)>,
    {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for (id, v) in records {
            if v.dim() != encoder.dimension {
                return Err(IndexError::DimensionMismatch {
                    expected: encoder.dimension,
                    actual: v.dim(),
                });
            }
            if v.is_zero() {
                return Err(EmbeddingError::ZeroVector.into());
            }
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
            vectors.push(v);
        }
        Ok(Self {
            encoder,
            ids,
            vectors,
        })
    }

    pub fn encoder(&self) -> &EncoderDescriptor {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Fails unless `other` describes the encoder this index was built with.
    pub fn check_encoder(&self, other: &EncoderDescriptor) -> Result<(), IndexError> {
        if *other != self.encoder {
            return Err(EmbeddingError::EncoderMismatch {
                expected: self.encoder.name.clone(),
                actual: other.name.clone(),
            }
            .into());
        }
        Ok(())
    }

    /// The `min(k, len)` most similar records, best first. Equal scores are
    /// ordered by ascending record id.
    pub fn top_k(&self, query: &EmbeddingVector<S>, k: usize) -> Result<Vec<ScoredHit<S>>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.encoder.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.encoder.dimension,
                actual: query.dim(),
            });
        }
        let mut scored = Vec::with_capacity(self.len());
        for (i, v) in self.vectors.iter().enumerate() {
            scored.push((cosine_similarity(query, v)?, i));
        }
        let by_rank = |a: &(S, usize), b: &(S, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(score, i)| ScoredHit {
                record_id: self.ids[i].clone(),
                score,
            })
            .collect())
    }
}
